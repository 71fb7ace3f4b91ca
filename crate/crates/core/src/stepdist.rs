//! Step-function predictive distributions and exact computations on them.
//!
//! A [`StepDistribution`] is a right-continuous CDF with finitely many jumps.
//! Everything here (CDF, quantiles, CRPS, PIT, mixtures) is computed in closed
//! form from the jump locations and cumulative probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the final cumulative probability before it is snapped to 1.
pub const TOTAL_MASS_TOL: f64 = 1e-12;
/// Tolerance on mixture weights summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Right-continuous step CDF: `F(y) = cumprobs[i]` for the largest `i` with
/// `points[i] <= y`, and `0` below the first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStep", into = "RawStep")]
pub struct StepDistribution {
    points: Vec<f64>,
    cumprobs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawStep {
    points: Vec<f64>,
    cumprobs: Vec<f64>,
}

impl TryFrom<RawStep> for StepDistribution {
    type Error = Error;

    fn try_from(raw: RawStep) -> Result<Self> {
        StepDistribution::new(raw.points, raw.cumprobs)
    }
}

impl From<StepDistribution> for RawStep {
    fn from(d: StepDistribution) -> Self {
        RawStep {
            points: d.points,
            cumprobs: d.cumprobs,
        }
    }
}

impl StepDistribution {
    /// Validates and builds a step distribution. The last cumulative
    /// probability must be within [`TOTAL_MASS_TOL`] of one and is stored as
    /// exactly `1.0`.
    pub fn new(points: Vec<f64>, mut cumprobs: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("step distribution needs at least one jump"));
        }
        if points.len() != cumprobs.len() {
            return Err(Error::invalid(format!(
                "points ({}) and cumprobs ({}) differ in length",
                points.len(),
                cumprobs.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("jump locations must be finite"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("jump locations must be strictly increasing"));
        }
        if cumprobs.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::invalid("cumulative probabilities must lie in (0, 1]"));
        }
        if cumprobs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "cumulative probabilities must be strictly increasing",
            ));
        }
        let last = cumprobs.last_mut().expect("nonempty");
        if (*last - 1.0).abs() > TOTAL_MASS_TOL {
            return Err(Error::invalid(format!(
                "final cumulative probability is {last}, expected 1"
            )));
        }
        *last = 1.0;
        // The snap must keep the sequence strictly increasing.
        if cumprobs.len() > 1 && cumprobs[cumprobs.len() - 2] >= 1.0 {
            return Err(Error::invalid("cumulative probabilities exceed 1"));
        }
        Ok(Self { points, cumprobs })
    }

    /// Unit mass at `x`.
    pub fn point_mass(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    /// Empirical CDF of a sample (ties coalesced).
    pub fn empirical(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::invalid("empirical CDF of an empty sample"));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut points = Vec::new();
        let mut cumprobs = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if i + 1 < sorted.len() && sorted[i + 1] == v {
                continue;
            }
            points.push(v);
            cumprobs.push((i + 1) as f64 / n);
        }
        Self::new(points, cumprobs)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn cumprobs(&self) -> &[f64] {
        &self.cumprobs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Probability mass at each jump.
    pub fn masses(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumprobs
            .iter()
            .map(|&c| {
                let m = c - prev;
                prev = c;
                m
            })
            .collect()
    }

    pub fn is_point_mass(&self) -> bool {
        self.points.len() == 1
    }

    /// `F(y)`.
    pub fn cdf_at(&self, y: f64) -> f64 {
        let k = self.points.partition_point(|&p| p <= y);
        if k == 0 {
            0.0
        } else {
            self.cumprobs[k - 1]
        }
    }

    /// Left limit `F(y-)`.
    pub fn cdf_left(&self, y: f64) -> f64 {
        let k = self.points.partition_point(|&p| p < y);
        if k == 0 {
            0.0
        } else {
            self.cumprobs[k - 1]
        }
    }

    /// Smallest `y` with `F(y) >= alpha`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "quantile level {alpha} outside (0, 1)"
            )));
        }
        let i = self.cumprobs.partition_point(|&c| c < alpha);
        Ok(self.points[i.min(self.points.len() - 1)])
    }

    /// Exact CRPS, `∫ (F(z) - 1{y <= z})^2 dz`, by summing over the
    /// partition induced by the jumps and the observation.
    pub fn crps(&self, y: f64) -> f64 {
        // Breakpoints are the jumps with y inserted; the integrand vanishes
        // left of the first breakpoint and right of the last one.
        let pos = self.points.partition_point(|&p| p < y);
        let below = if pos > 0 { self.cumprobs[pos - 1] } else { 0.0 };
        let breakpoints = self.points[..pos]
            .iter()
            .copied()
            .zip(self.cumprobs[..pos].iter().copied())
            .chain(std::iter::once((y, below)))
            .chain(
                self.points[pos..]
                    .iter()
                    .copied()
                    .zip(self.cumprobs[pos..].iter().copied()),
            );

        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        let mut level = 0.0;
        for (x, next_level) in breakpoints {
            if let Some(px) = prev {
                let ind = if y <= px { 1.0 } else { 0.0 };
                let diff = level - ind;
                total += (x - px) * diff * diff;
            }
            prev = Some(x);
            level = next_level;
        }
        total
    }

    /// CRPS weighted by a threshold measure.
    pub fn crps_weighted(&self, y: f64, mu: &ThresholdMeasure) -> f64 {
        match mu {
            ThresholdMeasure::Lebesgue => self.crps(y),
            ThresholdMeasure::Discrete { locations, weights } => locations
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w != 0.0)
                .map(|(&z, &w)| {
                    let ind = if y <= z { 1.0 } else { 0.0 };
                    let d = self.cdf_at(z) - ind;
                    w * d * d
                })
                .sum(),
        }
    }

    /// Randomized PIT `F(y-) + v (F(y) - F(y-))`.
    pub fn pit(&self, y: f64, v: f64) -> f64 {
        let lo = self.cdf_left(y);
        let hi = self.cdf_at(y);
        lo + v * (hi - lo)
    }

    /// Re-checks every structural invariant exactly.
    pub fn check_invariants(&self) -> Result<()> {
        if self.cumprobs.last() != Some(&1.0) {
            return Err(Error::invalid("final cumulative probability is not exactly 1"));
        }
        Self::new(self.points.clone(), self.cumprobs.clone()).map(|_| ())
    }
}

/// Measure over thresholds used by the weighted CRPS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdMeasure {
    Lebesgue,
    Discrete {
        locations: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl ThresholdMeasure {
    pub fn discrete(locations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if locations.len() != weights.len() {
            return Err(Error::invalid("measure locations and weights differ in length"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("measure weights must be finite and nonnegative"));
        }
        if locations.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("measure locations must be finite"));
        }
        Ok(ThresholdMeasure::Discrete { locations, weights })
    }
}

/// Pointwise convex combination of CDFs, as a single step distribution on the
/// union of jump points.
pub fn mixture(components: &[StepDistribution], weights: &[f64]) -> Result<StepDistribution> {
    if components.is_empty() {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    if components.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} components but {} weights",
            components.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("mixture weights must be finite and nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(format!("mixture weights sum to {sum}, expected 1")));
    }

    // Drop zero weights and merge identical components.
    let mut distinct: Vec<(&StepDistribution, f64)> = Vec::new();
    for (d, &w) in components.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        match distinct.iter_mut().find(|(e, _)| *e == d) {
            Some(entry) => entry.1 += w,
            None => distinct.push((d, w)),
        }
    }
    if distinct.len() == 1 {
        return Ok(distinct[0].0.clone());
    }

    let mut events: Vec<(f64, f64)> =
        Vec::with_capacity(distinct.iter().map(|(d, _)| d.len()).sum());
    for (d, w) in &distinct {
        let mut prev = 0.0;
        for (&x, &c) in d.points.iter().zip(&d.cumprobs) {
            events.push((x, w * (c - prev)));
            prev = c;
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points: Vec<f64> = Vec::new();
    let mut cumprobs: Vec<f64> = Vec::new();
    let mut running = 0.0;
    let mut i = 0;
    while i < events.len() {
        let x = events[i].0;
        while i < events.len() && events[i].0 == x {
            running += events[i].1;
            i += 1;
        }
        let level = running.min(1.0);
        if level > 0.0 && cumprobs.last().is_none_or(|&last| level > last) {
            points.push(x);
            cumprobs.push(level);
        }
    }
    if let Some(last) = cumprobs.last_mut() {
        *last = 1.0;
    }
    StepDistribution::new(points, cumprobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> StepDistribution {
        StepDistribution::new(vec![0.0, 1.0], vec![0.5, 1.0]).unwrap()
    }

    /// Midpoint-rule quadrature of the CRPS integrand on a fixed grid.
    fn crps_quadrature(d: &StepDistribution, y: f64, step: f64) -> f64 {
        let lo = d.points()[0].min(y) - 1.0;
        let hi = d.points()[d.len() - 1].max(y) + 1.0;
        let cells = ((hi - lo) / step).round() as usize;
        (0..cells)
            .map(|k| {
                let z = lo + (k as f64 + 0.5) * step;
                let ind = if y <= z { 1.0 } else { 0.0 };
                let diff = d.cdf_at(z) - ind;
                diff * diff * step
            })
            .sum()
    }

    #[test]
    fn cdf_examples() {
        let pm = StepDistribution::point_mass(2.0).unwrap();
        assert_eq!(pm.cdf_at(2.0), 1.0);
        assert_eq!(pm.cdf_at(1.999), 0.0);
        let d = two_point();
        assert_eq!(d.cdf_at(0.5), 0.5);
        assert_eq!(d.cdf_left(1.0), 0.5);
        assert_eq!(d.cdf_left(0.0), 0.0);
    }

    #[test]
    fn quantile_examples() {
        let d = two_point();
        assert_eq!(d.quantile(0.5).unwrap(), 0.0);
        assert_eq!(d.quantile(0.75).unwrap(), 1.0);
        let pm = StepDistribution::point_mass(2.0).unwrap();
        for a in [0.01, 0.5, 0.99] {
            assert_eq!(pm.quantile(a).unwrap(), 2.0);
        }
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
        assert!(d.quantile(f64::NAN).is_err());
    }

    #[test]
    fn crps_examples_match_quadrature() {
        let pm = StepDistribution::point_mass(2.0).unwrap();
        assert_eq!(pm.crps(2.0), 0.0);
        let d = two_point();
        let q0 = crps_quadrature(&d, 0.0, 1e-4);
        let q2 = crps_quadrature(&d, 2.0, 1e-4);
        assert!((q0 - 0.25).abs() < 1e-9, "{q0}");
        assert!((q2 - 1.25).abs() < 1e-9, "{q2}");
        assert!((d.crps(0.0) - 0.25).abs() < 1e-15);
        assert!((d.crps(2.0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn crps_of_point_mass_is_absolute_error() {
        let pm = StepDistribution::point_mass(1.5).unwrap();
        assert_eq!(pm.crps(4.0), 2.5);
        assert_eq!(pm.crps(-1.0), 2.5);
    }

    #[test]
    fn weighted_crps() {
        let d = two_point();
        assert_eq!(d.crps_weighted(0.7, &ThresholdMeasure::Lebesgue), d.crps(0.7));
        let mu = ThresholdMeasure::discrete(vec![0.5], vec![1.0]).unwrap();
        assert_eq!(d.crps_weighted(0.0, &mu), 0.25);
        let zero = ThresholdMeasure::discrete(vec![-1.0, 0.5, 3.0], vec![0.0; 3]).unwrap();
        assert_eq!(d.crps_weighted(0.0, &zero), 0.0);
        assert!(ThresholdMeasure::discrete(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn pit_examples() {
        let pm = StepDistribution::point_mass(3.0).unwrap();
        assert_eq!(pm.pit(3.0, 0.3), 0.3);
        let d = two_point();
        assert_eq!(d.pit(-5.0, 0.9), 0.0);
        assert_eq!(d.pit(0.0, 0.5), 0.25);
    }

    #[test]
    fn mixture_examples() {
        let d = two_point();
        let same = mixture(&[d.clone(), d.clone(), d.clone()], &[1.0 / 3.0; 3]).unwrap();
        assert_eq!(same, d);

        let a = StepDistribution::point_mass(0.0).unwrap();
        let b = StepDistribution::point_mass(1.0).unwrap();
        let m = mixture(&[a.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        assert_eq!(m, two_point());

        let first = mixture(&[d.clone(), b], &[1.0, 0.0]).unwrap();
        assert_eq!(first, d);

        assert!(mixture(std::slice::from_ref(&a), &[0.9]).is_err());
        assert!(mixture(&[], &[]).is_err());
        assert!(mixture(&[a], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn constructor_rejects_invalid() {
        assert!(StepDistribution::new(vec![], vec![]).is_err());
        assert!(StepDistribution::new(vec![1.0, 0.0], vec![0.5, 1.0]).is_err());
        assert!(StepDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(StepDistribution::new(vec![0.0, 1.0], vec![0.5, 0.9]).is_err());
        assert!(StepDistribution::new(vec![0.0], vec![0.0]).is_err());
        assert!(StepDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
        let snapped = StepDistribution::new(vec![0.0], vec![1.0 - 1e-14]).unwrap();
        assert_eq!(snapped.cumprobs(), &[1.0]);
    }

    #[test]
    fn empirical_coalesces_ties() {
        let e = StepDistribution::empirical(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(e.points(), &[1.0, 2.0]);
        assert_eq!(e.cumprobs(), &[2.0 / 3.0, 1.0]);
    }

    #[test]
    fn serde_roundtrip_validates() {
        let d = two_point();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"points":[0.0,1.0],"cumprobs":[0.5,1.0]}"#);
        let back: StepDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<StepDistribution>(
            r#"{"points":[1.0,0.0],"cumprobs":[0.5,1.0]}"#
        )
        .is_err());
    }
}
