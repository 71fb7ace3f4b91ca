//! Isotonic distributional regression on a totally ordered index.
//!
//! For every threshold `t` among the observed responses, the fitted column
//! `F̂_·(t)` is the antitonic (nonincreasing in the index) least-squares fit of
//! the indicators `1{y <= t}`. Observations sharing an index value are pooled
//! into one weighted observation first.
//!
//! All indicator sums and weights are integers, so each fitted value is
//! produced by a single division `count / weight` of exact integers. That
//! makes the solver agree bit-for-bit with [`minmax_cdf`] and makes every fit
//! depend only on the orderings of indices and responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::stepdist::StepDistribution;

/// Training pairs `(index, response)` for an IDR fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairs {
    index: Vec<f64>,
    response: Vec<f64>,
}

impl TrainingPairs {
    pub fn new(index: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        if index.len() != response.len() {
            return Err(Error::invalid(format!(
                "{} index values but {} responses",
                index.len(),
                response.len()
            )));
        }
        if index.is_empty() {
            return Err(Error::invalid("IDR needs at least one observation"));
        }
        if index.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::invalid("IDR training data must be finite"));
        }
        Ok(Self { index, response })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (index, response) = pairs.iter().copied().unzip();
        Self::new(index, response)
    }

    pub fn index(&self) -> &[f64] {
        &self.index
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Fitted IDR: one CDF per unique training index value, evaluated on the grid
/// of unique training responses.
///
/// Rows are held as step distributions; the dense `cdf[row][threshold]`
/// matrix is what gets serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIdrFit", into = "RawIdrFit")]
pub struct IdrFit {
    indices: Vec<f64>,
    counts: Vec<u64>,
    thresholds: Vec<f64>,
    rows: Vec<StepDistribution>,
}

#[derive(Serialize, Deserialize)]
struct RawIdrFit {
    indices: Vec<f64>,
    counts: Vec<u64>,
    thresholds: Vec<f64>,
    cdf: Vec<Vec<f64>>,
}

impl From<IdrFit> for RawIdrFit {
    fn from(fit: IdrFit) -> Self {
        let cdf = (0..fit.rows.len()).map(|j| fit.row_values(j)).collect();
        RawIdrFit {
            indices: fit.indices,
            counts: fit.counts,
            thresholds: fit.thresholds,
            cdf,
        }
    }
}

impl TryFrom<RawIdrFit> for IdrFit {
    type Error = Error;

    fn try_from(raw: RawIdrFit) -> Result<Self> {
        IdrFit::from_dense(raw.indices, raw.counts, raw.thresholds, raw.cdf)
    }
}

impl IdrFit {
    /// Rebuilds a fit from its dense matrix, checking every invariant.
    pub fn from_dense(
        indices: Vec<f64>,
        counts: Vec<u64>,
        thresholds: Vec<f64>,
        cdf: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let g = indices.len();
        let m = thresholds.len();
        if g == 0 || m == 0 {
            return Err(Error::Schema("IDR fit has no rows or no thresholds".into()));
        }
        if counts.len() != g || cdf.len() != g {
            return Err(Error::Schema("IDR fit dimensions disagree".into()));
        }
        if counts.contains(&0) {
            return Err(Error::Schema("IDR index counts must be positive".into()));
        }
        for (name, v) in [("indices", &indices), ("thresholds", &thresholds)] {
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Schema(format!(
                    "IDR {name} must be finite and strictly increasing"
                )));
            }
        }
        let mut rows = Vec::with_capacity(g);
        for (j, row) in cdf.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Schema(format!("IDR cdf row {j} has wrong length")));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) || row[m - 1] != 1.0 {
                return Err(Error::Schema(format!("IDR cdf row {j} is not a CDF")));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Schema(format!("IDR cdf row {j} is decreasing")));
            }
            if j > 0 && cdf[j - 1].iter().zip(row).any(|(prev, cur)| cur > prev) {
                return Err(Error::Schema(format!(
                    "IDR cdf column not antitonic at row {j}"
                )));
            }
            rows.push(compress_row(&thresholds, row.iter().copied().enumerate())?);
        }
        Ok(Self {
            indices,
            counts,
            thresholds,
            rows,
        })
    }

    /// Sorted unique training index values.
    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    /// Number of training observations at each index value.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sorted unique training responses.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn n_rows(&self) -> usize {
        self.indices.len()
    }

    pub fn n_obs(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fitted CDF of row `j` as a step distribution.
    pub fn row(&self, j: usize) -> &StepDistribution {
        &self.rows[j]
    }

    /// `F̂_{indices[j]}(thresholds[k])`.
    pub fn value(&self, j: usize, k: usize) -> f64 {
        self.rows[j].cdf_at(self.thresholds[k])
    }

    /// Dense row `j` over all thresholds.
    pub fn row_values(&self, j: usize) -> Vec<f64> {
        let row = &self.rows[j];
        let mut out = Vec::with_capacity(self.thresholds.len());
        let mut level = 0.0;
        let mut next = 0;
        for &t in &self.thresholds {
            if next < row.len() && row.points()[next] == t {
                level = row.cumprobs()[next];
                next += 1;
            }
            out.push(level);
        }
        out
    }

    /// Dense column at threshold position `k`, one entry per index value.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows.len()).map(|j| self.value(j, k)).collect()
    }

    /// Predictive CDF at index value `u`: the fitted row at a training index,
    /// linear interpolation of the neighbouring rows in between, and the
    /// first or last row outside the training range.
    pub fn predict(&self, u: f64) -> Result<StepDistribution> {
        if !u.is_finite() {
            return Err(Error::invalid(format!("prediction index {u} is not finite")));
        }
        let pos = self.indices.partition_point(|&v| v < u);
        if pos < self.indices.len() && self.indices[pos] == u {
            return Ok(self.rows[pos].clone());
        }
        if pos == 0 {
            return Ok(self.rows[0].clone());
        }
        if pos == self.indices.len() {
            return Ok(self.rows[pos - 1].clone());
        }
        let (lo, hi) = (self.indices[pos - 1], self.indices[pos]);
        let lambda = (hi - u) / (hi - lo);
        interpolate(&self.rows[pos - 1], &self.rows[pos], lambda)
    }

    /// Mean CRPS of the fitted rows against the training responses.
    pub fn insample_crps(&self, data: &TrainingPairs) -> Result<f64> {
        if data.len() as u64 != self.n_obs() {
            return Err(Error::invalid(format!(
                "fit was trained on {} observations, got {}",
                self.n_obs(),
                data.len()
            )));
        }
        let mut total = 0.0;
        for (&u, &y) in data.index().iter().zip(data.response()) {
            let j = self
                .indices
                .binary_search_by(|v| v.total_cmp(&u))
                .map_err(|_| Error::invalid(format!("index {u} is not a training index")))?;
            total += self.rows[j].crps(y);
        }
        Ok(total / data.len() as f64)
    }

}

/// Turns `(threshold position, value)` pairs of a nondecreasing row into a
/// step distribution, keeping only strict increases.
/// `lambda * upper + (1 - lambda) * lower` for neighbouring rows with
/// `upper >= lower` pointwise.
///
/// Evaluated as `lower + lambda * (upper - lower)` and kept inside
/// `[lower, upper]`, so equal entries stay exact and predictions are
/// antitonic in the index without rounding slack.
fn interpolate(upper: &StepDistribution, lower: &StepDistribution, lambda: f64) -> Result<StepDistribution> {
    let (pa, ca) = (upper.points(), upper.cumprobs());
    let (pb, cb) = (lower.points(), lower.cumprobs());
    let mut points = Vec::with_capacity(pa.len() + pb.len());
    let mut cumprobs: Vec<f64> = Vec::with_capacity(pa.len() + pb.len());
    let (mut i, mut j) = (0, 0);
    let (mut a, mut b) = (0.0, 0.0);
    while i < pa.len() || j < pb.len() {
        let x = match (pa.get(i), pb.get(j)) {
            (Some(&xa), Some(&xb)) => xa.min(xb),
            (Some(&xa), None) => xa,
            (None, Some(&xb)) => xb,
            (None, None) => unreachable!(),
        };
        if pa.get(i) == Some(&x) {
            a = ca[i];
            i += 1;
        }
        if pb.get(j) == Some(&x) {
            b = cb[j];
            j += 1;
        }
        let v = (b + lambda * (a - b)).max(b).min(a);
        if v > cumprobs.last().copied().unwrap_or(0.0) {
            points.push(x);
            cumprobs.push(v);
        }
    }
    StepDistribution::new(points, cumprobs)
}

fn compress_row(
    thresholds: &[f64],
    entries: impl IntoIterator<Item = (usize, f64)>,
) -> Result<StepDistribution> {
    let mut points = Vec::new();
    let mut cumprobs: Vec<f64> = Vec::new();
    for (k, v) in entries {
        if v > cumprobs.last().copied().unwrap_or(0.0) {
            points.push(thresholds[k]);
            cumprobs.push(v);
        }
    }
    StepDistribution::new(points, cumprobs)
}

/// Observations pooled by unique index value, with the threshold position of
/// every response.
struct Pooled {
    indices: Vec<f64>,
    weights: Vec<u64>,
    thresholds: Vec<f64>,
    /// For threshold position `k`, the groups gaining one indicator at `k`.
    arrivals: Vec<Vec<u32>>,
}

impl Pooled {
    fn new(data: &TrainingPairs) -> Self {
        let mut indices = data.index().to_vec();
        indices.sort_by(f64::total_cmp);
        indices.dedup();
        let mut thresholds = data.response().to_vec();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();

        let mut weights = vec![0u64; indices.len()];
        let mut arrivals = vec![Vec::new(); thresholds.len()];
        for (&u, &y) in data.index().iter().zip(data.response()) {
            let g = indices.partition_point(|&v| v < u);
            let k = thresholds.partition_point(|&v| v < y);
            weights[g] += 1;
            arrivals[k].push(g as u32);
        }
        Self {
            indices,
            weights,
            thresholds,
            arrivals,
        }
    }
}

/// Pool-adjacent-violators for a nonincreasing fit of integer sums with
/// integer weights. Writes one fitted value per group into `out`.
fn antitonic_pava(sums: &[u64], weights: &[u64], blocks: &mut Vec<(u64, u64, usize)>, out: &mut [f64]) {
    blocks.clear();
    for (&s, &w) in sums.iter().zip(weights) {
        blocks.push((s, w, 1));
        while blocks.len() >= 2 {
            let (s1, w1, _) = blocks[blocks.len() - 2];
            let (s2, w2, _) = blocks[blocks.len() - 1];
            // violation: mean of the earlier block is below the later one
            if (s1 as u128) * (w2 as u128) < (s2 as u128) * (w1 as u128) {
                let (s2, w2, l2) = blocks.pop().expect("len >= 2");
                let last = blocks.last_mut().expect("len >= 1");
                last.0 += s2;
                last.1 += w2;
                last.2 += l2;
            } else {
                break;
            }
        }
    }
    let mut g = 0;
    for &(s, w, len) in blocks.iter() {
        let v = s as f64 / w as f64;
        out[g..g + len].fill(v);
        g += len;
    }
}

/// Fits IDR with the default execution strategy.
pub fn fit(data: &TrainingPairs) -> Result<IdrFit> {
    fit_with(data, Execution::default())
}

/// Fits IDR. Columns are independent, so thresholds are processed in chunks
/// that may run in parallel; the result does not depend on `exec`.
pub fn fit_with(data: &TrainingPairs, exec: Execution) -> Result<IdrFit> {
    let pooled = Pooled::new(data);
    let g = pooled.indices.len();
    let m = pooled.thresholds.len();

    let n_chunks = match exec {
        Execution::Sequential => 1,
        Execution::Parallel => parallel_chunks(m),
    };
    let chunk_len = m.div_ceil(n_chunks);
    let n_chunks = m.div_ceil(chunk_len);

    // Each chunk yields, per group, the value at its first column and every
    // change within the chunk.
    let partial: Vec<Vec<Vec<(u32, f64)>>> = exec.map_range(n_chunks, |c| {
        let k0 = c * chunk_len;
        let k1 = ((c + 1) * chunk_len).min(m);
        let mut sums = vec![0u64; g];
        for arrivals in &pooled.arrivals[..k0] {
            for &grp in arrivals {
                sums[grp as usize] += 1;
            }
        }
        let mut blocks = Vec::new();
        let mut column = vec![0.0; g];
        let mut last = vec![f64::NAN; g];
        let mut changes: Vec<Vec<(u32, f64)>> = vec![Vec::new(); g];
        for k in k0..k1 {
            for &grp in &pooled.arrivals[k] {
                sums[grp as usize] += 1;
            }
            antitonic_pava(&sums, &pooled.weights, &mut blocks, &mut column);
            for j in 0..g {
                // Clamp guards the [0, 1] invariant; count/weight never leaves it.
                let v = column[j].clamp(0.0, 1.0);
                if v != last[j] {
                    changes[j].push((k as u32, v));
                    last[j] = v;
                }
            }
        }
        changes
    });

    let mut rows = Vec::with_capacity(g);
    for j in 0..g {
        let entries = partial
            .iter()
            .flat_map(|chunk| chunk[j].iter().map(|&(k, v)| (k as usize, v)));
        rows.push(compress_row(&pooled.thresholds, entries)?);
    }

    Ok(IdrFit {
        indices: pooled.indices,
        counts: pooled.weights,
        thresholds: pooled.thresholds,
        rows,
    })
}

#[cfg(feature = "parallel")]
fn parallel_chunks(m: usize) -> usize {
    (rayon::current_num_threads() * 4).clamp(1, m.max(1))
}

#[cfg(not(feature = "parallel"))]
fn parallel_chunks(_m: usize) -> usize {
    1
}

/// Min-max formula for the antitonic fit at position `j` and threshold `t`:
/// `min_{r <= j} max_{s >= j}` of the mean of `1{y <= t}` over `r..=s`.
///
/// Requires data sorted by strictly increasing index. This is an `O(n^2)`
/// oracle, not a solver.
pub fn minmax_cdf(data: &TrainingPairs, j: usize, t: f64) -> Result<f64> {
    let idx = data.index();
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "min-max formula needs strictly increasing index values",
        ));
    }
    let n = data.len();
    if j >= n {
        return Err(Error::invalid(format!("position {j} out of range for {n} rows")));
    }
    let mut prefix = vec![0u64; n + 1];
    for (i, &y) in data.response().iter().enumerate() {
        prefix[i + 1] = prefix[i] + u64::from(y <= t);
    }
    let mean = |r: usize, s: usize| (prefix[s + 1] - prefix[r]) as f64 / (s + 1 - r) as f64;
    let value = (0..=j)
        .map(|r| (j..n).map(|s| mean(r, s)).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> TrainingPairs {
        TrainingPairs::from_pairs(&[(1.0, 1.0), (2.0, 0.0), (3.0, 2.0)]).unwrap()
    }

    /// Exhaustive projection onto the antitonic cone: the minimizer is
    /// piecewise constant with block means on some partition into runs, so
    /// enumerate all `2^(n-1)` partitions and keep the best feasible one.
    fn brute_force_antitonic(z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << (n - 1)) {
            let mut fitted = vec![0.0; n];
            let mut start = 0;
            for i in 0..n {
                let cut = i == n - 1 || mask & (1 << i) != 0;
                if cut {
                    let m = z[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                    fitted[start..=i].fill(m);
                    start = i + 1;
                }
            }
            if fitted.windows(2).any(|w| w[0] < w[1] - 1e-15) {
                continue;
            }
            let sse: f64 = fitted.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-15) {
                best = Some((sse, fitted));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn brute_force_oracle_on_the_worked_example() {
        // indicators at t = 0, 1, 2 for responses (1, 0, 2)
        assert_eq!(brute_force_antitonic(&[0.0, 1.0, 0.0]), vec![0.5, 0.5, 0.0]);
        assert_eq!(brute_force_antitonic(&[1.0, 1.0, 0.0]), vec![1.0, 1.0, 0.0]);
        assert_eq!(brute_force_antitonic(&[1.0, 1.0, 1.0]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn fit_worked_example() {
        let fit = fit(&example()).unwrap();
        assert_eq!(fit.thresholds(), &[0.0, 1.0, 2.0]);
        assert_eq!(fit.column(0), vec![0.5, 0.5, 0.0]);
        assert_eq!(fit.column(1), vec![1.0, 1.0, 0.0]);
        assert_eq!(fit.column(2), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_observation_is_point_mass() {
        let fit = fit(&TrainingPairs::from_pairs(&[(0.3, 5.0)]).unwrap()).unwrap();
        assert_eq!(fit.n_rows(), 1);
        assert_eq!(fit.row(0), &StepDistribution::point_mass(5.0).unwrap());
    }

    #[test]
    fn ordered_data_gives_point_masses() {
        let data = TrainingPairs::from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        let fit = fit(&data).unwrap();
        for j in 0..3 {
            assert_eq!(fit.row(j), &StepDistribution::point_mass(j as f64 + 1.0).unwrap());
        }
        assert_eq!(fit.insample_crps(&data).unwrap(), 0.0);
    }

    #[test]
    fn ties_in_index_are_pooled() {
        let data =
            TrainingPairs::from_pairs(&[(1.0, 2.0), (1.0, 0.0), (2.0, 1.0), (2.0, 1.0)]).unwrap();
        let fit = fit(&data).unwrap();
        assert_eq!(fit.indices(), &[1.0, 2.0]);
        assert_eq!(fit.counts(), &[2, 2]);
        // t = 0: indicators (1,0 | 0,0) -> (0.5, 0); t = 1: (1,0 | 1,1) -> pooled 0.75
        assert_eq!(fit.column(0), vec![0.5, 0.0]);
        assert_eq!(fit.column(1), vec![0.75, 0.75]);
        assert_eq!(fit.column(2), vec![1.0, 1.0]);
    }

    #[test]
    fn minmax_examples() {
        let data = example();
        assert_eq!(minmax_cdf(&data, 1, 0.0).unwrap(), 0.5);
        assert_eq!(minmax_cdf(&data, 0, 2.0).unwrap(), 1.0);
        assert_eq!(minmax_cdf(&data, 0, 10.0).unwrap(), 1.0);
        let one = TrainingPairs::from_pairs(&[(0.0, 3.0)]).unwrap();
        assert_eq!(minmax_cdf(&one, 0, 2.0).unwrap(), 0.0);
        assert_eq!(minmax_cdf(&one, 0, 3.0).unwrap(), 1.0);
        let tied = TrainingPairs::from_pairs(&[(1.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!(minmax_cdf(&tied, 0, 0.0).is_err());
    }

    #[test]
    fn predict_interpolates_and_clamps() {
        let data = TrainingPairs::from_pairs(&[(1.0, 0.0), (3.0, 2.0)]).unwrap();
        let fit = fit(&data).unwrap();
        assert_eq!(&fit.predict(1.0).unwrap(), fit.row(0));
        assert_eq!(&fit.predict(-10.0).unwrap(), fit.row(0));
        assert_eq!(&fit.predict(7.0).unwrap(), fit.row(1));
        let mid = fit.predict(2.0).unwrap();
        for y in [-1.0, 0.0, 1.0, 2.0, 3.0] {
            let expect = 0.5 * fit.row(0).cdf_at(y) + 0.5 * fit.row(1).cdf_at(y);
            assert_eq!(mid.cdf_at(y), expect);
        }
        assert!(fit.predict(f64::NAN).is_err());
    }

    #[test]
    fn insample_crps_of_worked_example() {
        let data = example();
        let fit = fit(&data).unwrap();
        // rows: (0.5 at 0, 1 at 1), same, point mass at 2
        let row = StepDistribution::new(vec![0.0, 1.0], vec![0.5, 1.0]).unwrap();
        let expected = (row.crps(1.0) + row.crps(0.0) + 0.0) / 3.0;
        assert_eq!(fit.insample_crps(&data).unwrap(), expected);
        let single = TrainingPairs::from_pairs(&[(2.0, 4.0)]).unwrap();
        assert_eq!(super::fit(&single).unwrap().insample_crps(&single).unwrap(), 0.0);
        let short = TrainingPairs::from_pairs(&[(1.0, 1.0)]).unwrap();
        assert!(fit.insample_crps(&short).is_err());
    }

    #[test]
    fn rejects_invalid_training_data() {
        assert!(TrainingPairs::new(vec![], vec![]).is_err());
        assert!(TrainingPairs::new(vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(TrainingPairs::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn serde_roundtrip_is_dense_and_validated() {
        let fit = fit(&example()).unwrap();
        let json = serde_json::to_string(&fit).unwrap();
        assert!(json.contains(r#""cdf":[[0.5,1.0,1.0],[0.5,1.0,1.0],[0.0,0.0,1.0]]"#), "{json}");
        let back: IdrFit = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fit);
        let broken = json.replace("[0.0,0.0,1.0]", "[0.9,0.9,1.0]");
        assert!(serde_json::from_str::<IdrFit>(&broken).is_err());
    }

    #[test]
    fn sequential_and_parallel_are_identical() {
        let pairs: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let u = ((i * 37) % 101) as f64;
                (u, ((i * 53) % 89) as f64 + 0.01 * u)
            })
            .collect();
        let data = TrainingPairs::from_pairs(&pairs).unwrap();
        let a = fit_with(&data, Execution::Sequential).unwrap();
        let b = fit_with(&data, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brute_force_agrees_on_random_small_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..=6);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|i| (i as f64, rng.random_range(0..4) as f64))
                .collect();
            let data = TrainingPairs::from_pairs(&pairs).unwrap();
            let fit = fit(&data).unwrap();
            for (k, &t) in fit.thresholds().iter().enumerate() {
                let z: Vec<f64> = pairs.iter().map(|p| f64::from(p.1 <= t)).collect();
                let oracle = brute_force_antitonic(&z);
                for (j, o) in oracle.iter().enumerate() {
                    assert!((fit.value(j, k) - o).abs() < 1e-9);
                    assert_eq!(fit.value(j, k), minmax_cdf(&data, j, t).unwrap());
                }
            }
        }
    }
}
