//! Forecast evaluation: CRPS, reliability bins, PIT histograms, the Wilcoxon
//! signed-rank comparison of paired scores, and simple baseline forecasters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::index::average_ranks;
use crate::stepdist::StepDistribution;

/// Largest effective sample size with an exact Wilcoxon p-value.
pub const WILCOXON_EXACT_MAX_N: usize = 25;
/// Reliability bins with at most this many members are flagged.
pub const SPARSE_BIN_COUNT: usize = 2;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: {a} forecasts but {b} observations")));
    }
    Ok(())
}

/// CRPS of every forecast against its observation.
pub fn crps_scores(
    forecasts: &[StepDistribution],
    y: &[f64],
    exec: Execution,
) -> Result<Vec<f64>> {
    check_len(forecasts.len(), y.len(), "crps")?;
    let pairs: Vec<(&StepDistribution, f64)> = forecasts.iter().zip(y.iter().copied()).collect();
    Ok(exec.map_slice(&pairs, |(f, obs)| f.crps(*obs)))
}

pub fn mean_crps(forecasts: &[StepDistribution], y: &[f64]) -> Result<f64> {
    let scores = crps_scores(forecasts, y, Execution::default())?;
    if scores.is_empty() {
        return Err(Error::invalid("no forecasts to score"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Mean absolute error of point forecasts (the CRPS of point masses).
pub fn point_mae(points: &[f64], y: &[f64]) -> Result<f64> {
    check_len(points.len(), y.len(), "point_mae")?;
    if y.is_empty() {
        return Err(Error::invalid("no forecasts to score"));
    }
    Ok(points.iter().zip(y).map(|(p, o)| (p - o).abs()).sum::<f64>() / y.len() as f64)
}

/// Unconditional forecast: the empirical CDF of the training responses.
pub fn ecdf_forecaster(y_train: &[f64]) -> Result<StepDistribution> {
    StepDistribution::empirical(y_train)
}

/// Ten bins `[0, 0.1], (0.1, 0.2], ..., (0.9, 1]`.
pub fn default_bin_edges() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

pub fn default_thresholds() -> Vec<f64> {
    vec![1.0, 5.0, 9.0, 13.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub threshold: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean forecast probability of exceeding the threshold.
    pub mean_forecast: Option<f64>,
    /// Observed frequency of exceeding the threshold.
    pub observed_frequency: Option<f64>,
    /// Too few members to plot.
    pub sparse: bool,
}

/// Reliability table for exceedance events `{y > t}`: forecast probabilities
/// `1 - F(t)` are binned by `edges` (first bin closed, the rest left-open).
pub fn reliability(
    forecasts: &[StepDistribution],
    y: &[f64],
    thresholds: &[f64],
    edges: &[f64],
) -> Result<Vec<ReliabilityBin>> {
    check_len(forecasts.len(), y.len(), "reliability")?;
    if thresholds.is_empty() {
        return Err(Error::invalid("reliability needs at least one threshold"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bin edges must be strictly increasing, at least two"));
    }
    let n_bins = edges.len() - 1;
    let mut out = Vec::with_capacity(thresholds.len() * n_bins);
    for &t in thresholds {
        let mut sum_p = vec![0.0; n_bins];
        let mut hits = vec![0usize; n_bins];
        let mut count = vec![0usize; n_bins];
        for (f, &obs) in forecasts.iter().zip(y) {
            let p = 1.0 - f.cdf_at(t);
            let Some(b) = bin_of(p, edges) else { continue };
            sum_p[b] += p;
            count[b] += 1;
            hits[b] += usize::from(obs > t);
        }
        for b in 0..n_bins {
            let c = count[b];
            out.push(ReliabilityBin {
                threshold: t,
                lower: edges[b],
                upper: edges[b + 1],
                count: c,
                mean_forecast: (c > 0).then(|| sum_p[b] / c as f64),
                observed_frequency: (c > 0).then(|| hits[b] as f64 / c as f64),
                sparse: c <= SPARSE_BIN_COUNT,
            });
        }
    }
    Ok(out)
}

fn bin_of(p: f64, edges: &[f64]) -> Option<usize> {
    let n_bins = edges.len() - 1;
    if p < edges[0] || p > edges[n_bins] {
        return None;
    }
    // first edge strictly >= p, bins are (e_{b}, e_{b+1}] except the first
    let k = edges.partition_point(|&e| e < p);
    Some(k.saturating_sub(1).min(n_bins - 1))
}

/// Randomized PIT values, one seeded uniform per observation in data order.
pub fn pit_values(forecasts: &[StepDistribution], y: &[f64], seed: u64) -> Result<Vec<f64>> {
    check_len(forecasts.len(), y.len(), "pit")?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(forecasts
        .iter()
        .zip(y)
        .map(|(f, &obs)| {
            let v: f64 = rng.random();
            f.pit(obs, v)
        })
        .collect())
}

/// Counts of PIT values over `n_bins` equal-width bins of `[0, 1]`.
pub fn histogram_counts(values: &[f64], n_bins: usize) -> Result<Vec<usize>> {
    if n_bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut counts = vec![0usize; n_bins];
    for &z in values {
        let b = ((z * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitHistogram {
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn pit_histogram(
    forecasts: &[StepDistribution],
    y: &[f64],
    n_bins: usize,
    seed: u64,
) -> Result<PitHistogram> {
    let values = pit_values(forecasts, y, seed)?;
    let counts = histogram_counts(&values, n_bins)?;
    Ok(PitHistogram { values, counts })
}

/// Kolmogorov-Smirnov distance of a sample to the uniform law on `[0, 1]`.
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &z)| {
            let z = z.clamp(0.0, 1.0);
            (z - i as f64 / n).abs().max(((i + 1) as f64 / n - z).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences `a - b`.
    pub statistic: f64,
    pub p_value: f64,
    /// Nonzero differences.
    pub n_effective: usize,
    pub exact: bool,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Two-sided Wilcoxon signed-rank test of paired scores. Zero differences
/// are dropped; tied magnitudes get average ranks. Exact for up to
/// [`WILCOXON_EXACT_MAX_N`] nonzero differences, otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("wilcoxon needs two nonempty samples of equal length"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            exact: true,
            degenerate: true,
        });
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&mags);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    if n <= WILCOXON_EXACT_MAX_N {
        // Doubled ranks are integers even with ties; count subsets by sum.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut ways = vec![0.0f64; total + 1];
        ways[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                ways[s] += ways[s - r];
            }
        }
        let w2 = (2.0 * w_plus).round() as usize;
        let all = 2f64.powi(n as i32);
        let lower: f64 = ways[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = ways[w2..].iter().sum::<f64>() / all;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(WilcoxonResult {
            statistic: w_plus,
            p_value: p,
            n_effective: n,
            exact: true,
            degenerate: false,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value: p,
        n_effective: n,
        exact: false,
        degenerate: false,
    })
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub pit_bins: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            bin_edges: default_bin_edges(),
            pit_bins: 20,
            seed: 0,
        }
    }
}

/// Scores of a baseline forecaster, compared against the main forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub id: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Main forecast scores versus baseline scores.
    pub comparison: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub crps: Vec<f64>,
    pub mean_crps: f64,
    pub pit: PitHistogram,
    pub reliability: Vec<ReliabilityBin>,
    pub baselines: Vec<BaselineScores>,
}

/// Full evaluation of probabilistic forecasts, optionally against an ECDF
/// baseline (from training responses) and point forecasts.
pub fn evaluate(
    forecasts: &[StepDistribution],
    y: &[f64],
    ecdf_train: Option<&[f64]>,
    point_forecasts: Option<&[f64]>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let crps = crps_scores(forecasts, y, Execution::default())?;
    if crps.is_empty() {
        return Err(Error::invalid("no forecasts to evaluate"));
    }
    let mean_crps = crps.iter().sum::<f64>() / crps.len() as f64;
    let pit = pit_histogram(forecasts, y, options.pit_bins, options.seed)?;
    let reliability = reliability(forecasts, y, &options.thresholds, &options.bin_edges)?;

    let mut baselines = Vec::new();
    if let Some(train) = ecdf_train {
        let ecdf = ecdf_forecaster(train)?;
        let scores: Vec<f64> = y.iter().map(|&obs| ecdf.crps(obs)).collect();
        baselines.push(baseline("ecdf", scores, &crps)?);
    }
    if let Some(points) = point_forecasts {
        check_len(points.len(), y.len(), "point forecasts")?;
        let scores: Vec<f64> = points.iter().zip(y).map(|(p, o)| (p - o).abs()).collect();
        baselines.push(baseline("point_mae", scores, &crps)?);
    }
    Ok(EvalReport {
        n: y.len(),
        crps,
        mean_crps,
        pit,
        reliability,
        baselines,
    })
}

fn baseline(id: &str, scores: Vec<f64>, main: &[f64]) -> Result<BaselineScores> {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let comparison = wilcoxon_signed_rank(main, &scores)?;
    Ok(BaselineScores {
        id: id.to_string(),
        scores,
        mean,
        comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> StepDistribution {
        StepDistribution::new(vec![0.0, 1.0], vec![0.5, 1.0]).unwrap()
    }

    /// Two-sided p-value by enumerating all sign assignments.
    fn enumerate_p(d: &[f64]) -> (f64, f64) {
        let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
        let ranks = average_ranks(&nz.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let w: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let n = nz.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            le += u64::from(s <= w + 1e-9);
            ge += u64::from(s >= w - 1e-9);
        }
        let all = (1u64 << n) as f64;
        (w, (2.0 * (le as f64 / all).min(ge as f64 / all)).min(1.0))
    }

    #[test]
    fn mean_crps_examples() {
        let pms: Vec<_> = [1.0, 2.0].iter().map(|&v| StepDistribution::point_mass(v).unwrap()).collect();
        assert_eq!(mean_crps(&pms, &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mean_crps(&[two_point()], &[0.0]).unwrap(), 0.25);
        let both = mean_crps(&[two_point(), two_point()], &[0.0, 2.0]).unwrap();
        assert_eq!(both, (0.25 + 1.25) / 2.0);
        assert!(mean_crps(&[two_point()], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn point_mae_examples() {
        assert_eq!(point_mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(point_mae(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(point_mae(&[0.0, 2.0], &[1.0, 0.0]).unwrap(), 1.5);
        assert!(point_mae(&[0.0], &[]).is_err());
        let pms: Vec<_> = [0.0, 2.0].iter().map(|&v| StepDistribution::point_mass(v).unwrap()).collect();
        assert_eq!(point_mae(&[0.0, 2.0], &[1.0, 0.0]).unwrap(), mean_crps(&pms, &[1.0, 0.0]).unwrap());
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(ecdf_forecaster(&[1.0]).unwrap(), StepDistribution::point_mass(1.0).unwrap());
        assert_eq!(ecdf_forecaster(&[0.0, 1.0]).unwrap(), two_point());
        let d = ecdf_forecaster(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(d.points(), &[1.0, 2.0]);
        assert_eq!(d.cumprobs(), &[2.0 / 3.0, 1.0]);
        assert!(ecdf_forecaster(&[]).is_err());
    }

    #[test]
    fn reliability_examples() {
        // constant forecaster with exceedance probability 0.5 and half the y above t
        let f = vec![two_point(); 4];
        let y = [0.0, 1.0, 0.0, 1.0];
        let bins = reliability(&f, &y, &[0.0], &default_bin_edges()).unwrap();
        let used: Vec<_> = bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(used.len(), 1);
        assert_eq!(used[0].mean_forecast, Some(0.5));
        assert_eq!(used[0].observed_frequency, Some(0.5));
        assert_eq!(used[0].lower, 0.4);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 4);
        let empty = bins.iter().find(|b| b.count == 0).unwrap();
        assert!(empty.sparse && empty.mean_forecast.is_none());

        let pm = vec![StepDistribution::point_mass(10.0).unwrap(); 3];
        let bins = reliability(&pm, &[11.0, 12.0, 13.0], &[5.0], &default_bin_edges()).unwrap();
        let top = bins.last().unwrap();
        assert_eq!(top.count, 3);
        assert_eq!(top.observed_frequency, Some(1.0));
        assert!(reliability(&pm, &[1.0, 1.0, 1.0], &[], &default_bin_edges()).is_err());
    }

    #[test]
    fn bin_edges_are_left_open() {
        let e = default_bin_edges();
        assert_eq!(bin_of(0.0, &e), Some(0));
        assert_eq!(bin_of(0.1, &e), Some(0));
        assert_eq!(bin_of(0.1000001, &e), Some(1));
        assert_eq!(bin_of(1.0, &e), Some(9));
        assert_eq!(bin_of(1.5, &e), None);
    }

    #[test]
    fn pit_histogram_examples() {
        let f = vec![StepDistribution::point_mass(1.0).unwrap(); 1000];
        let y = vec![1.0; 1000];
        let h = pit_histogram(&f, &y, 1, 3).unwrap();
        assert_eq!(h.counts, vec![1000]);
        // point masses at y give PIT = V exactly
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for z in &h.values {
            let v: f64 = rng.random();
            assert_eq!(*z, v);
        }
        assert!(histogram_counts(&[0.5], 0).is_err());
        assert_eq!(histogram_counts(&[0.0, 0.05, 1.0], 20).unwrap()[19], 1);
    }

    #[test]
    fn wilcoxon_examples() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(r.statistic, 6.0);
        assert_eq!(r.p_value, 0.25);
        assert!(r.exact);

        let zero = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.p_value, 1.0);

        let b: Vec<f64> = (0..10).map(|i| i as f64 * 0.7).collect();
        let a: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 55.0);
        assert_eq!(r.p_value, 0.001953125);
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration_with_ties() {
        let d = [1.0, -1.0, 2.0, 2.0, -3.0, 0.0, 4.0, 4.0, 4.0, -0.5];
        let (w, p) = enumerate_p(&d);
        let r = wilcoxon_signed_rank(&d, &[0.0; 10]).unwrap();
        assert_eq!(r.statistic, w);
        assert!((r.p_value - p).abs() < 1e-15);
        assert_eq!(r.n_effective, 9);
    }

    #[test]
    fn wilcoxon_normal_approximation_is_close_to_exact_boundary() {
        // n = 26 uses the approximation; symmetric data gives p near 1
        let d: Vec<f64> = (1..=26).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        let r = wilcoxon_signed_rank(&d, &[0.0; 26]).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.5);
        let pos: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&pos, &[0.0; 40]).unwrap();
        assert!(r.p_value < 1e-6 && r.p_value > 0.0);
    }

    #[test]
    fn evaluate_assembles_baselines() {
        let f = vec![two_point(); 4];
        let y = [0.0, 1.0, 0.0, 2.0];
        let rep = evaluate(&f, &y, Some(&[0.0, 1.0]), Some(&[0.0, 1.0, 0.0, 1.0]), &EvalOptions::default()).unwrap();
        assert_eq!(rep.n, 4);
        assert_eq!(rep.baselines.len(), 2);
        assert_eq!(rep.baselines[0].id, "ecdf");
        assert_eq!(rep.baselines[0].scores, rep.crps);
        assert!(rep.baselines[0].comparison.degenerate);
        assert_eq!(rep.baselines[1].mean, 0.25);
        assert_eq!(rep.pit.counts.iter().sum::<usize>(), 4);
    }
}
