//! Synthetic data from a known distributional index model, and an experiment
//! runner that tracks the uniform estimation error as the sample grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dim::{fit_dim_with, predict_dim_with, Covariates, DimConfig, DimModel, IndexSource};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::index::{DesignMatrix, ResponseTransform};
use crate::stepdist::StepDistribution;

/// Conditional family `F_u` indexed by `u = θ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `Normal(u, 1)`; Lipschitz in `u` with constant `1/√(2π)`.
    GaussianShift,
    /// Exponential with mean `exp(u)`.
    ExpScale,
}

impl Family {
    pub fn cdf(self, u: f64, y: f64) -> f64 {
        match self {
            Family::GaussianShift => 0.5 * erfc(-(y - u) / std::f64::consts::SQRT_2),
            Family::ExpScale if y <= 0.0 => 0.0,
            Family::ExpScale => -(-y / u.exp()).exp_m1(),
        }
    }

    fn sample(self, u: f64, rng: &mut ChaCha20Rng) -> f64 {
        match self {
            Family::GaussianShift => Normal::new(u, 1.0).expect("unit scale").sample(rng),
            Family::ExpScale => Exp::new((-u).exp()).expect("positive rate").sample(rng),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_shift" => Ok(Family::GaussianShift),
            "exp_scale" => Ok(Family::ExpScale),
            other => Err(Error::invalid(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    /// Independent uniforms on `[0, 1]^p`.
    UnitCube,
    /// Every row equals the given vector.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDgp {
    alpha: Vec<f64>,
    family: Family,
    covariates: CovariateLaw,
    seed: u64,
}

/// One synthetic sample with its true index values.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
}

impl SyntheticDgp {
    pub fn new(alpha: Vec<f64>, family: Family, covariates: CovariateLaw, seed: u64) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("true coefficients must be finite and nonempty"));
        }
        if alpha.iter().all(|&a| a == 0.0) {
            return Err(Error::invalid("true coefficients must not all be zero"));
        }
        if let CovariateLaw::Fixed(row) = &covariates {
            if row.len() != alpha.len() {
                return Err(Error::invalid("fixed covariate row has the wrong length"));
            }
        }
        Ok(Self {
            alpha,
            family,
            covariates,
            seed,
        })
    }

    pub fn p(&self) -> usize {
        self.alpha.len()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn true_index(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.alpha).map(|(a, b)| a * b).sum()
    }

    /// True conditional CDF at covariate row `x`.
    pub fn true_cdf(&self, x: &[f64], y: f64) -> f64 {
        self.family.cdf(self.true_index(x), y)
    }

    /// `n` i.i.d. draws from stream 0 of the generator.
    pub fn generate(&self, n: usize) -> Result<Sample> {
        self.generate_stream(n, 0)
    }

    /// `n` i.i.d. draws from the given stream; distinct streams are
    /// independent samples under the same seed.
    pub fn generate_stream(&self, n: usize, stream: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let p = self.p();
        let mut data = Vec::with_capacity(n * p);
        let mut theta = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let start = data.len();
            match &self.covariates {
                CovariateLaw::UnitCube => data.extend((0..p).map(|_| rng.random::<f64>())),
                CovariateLaw::Fixed(row) => data.extend_from_slice(row),
            }
            let u = self.true_index(&data[start..]);
            theta.push(u);
            y.push(self.family.sample(u, &mut rng));
        }
        let columns = (0..p).map(|j| format!("x{j}")).collect();
        Ok(Sample {
            x: DesignMatrix::from_row_major(columns, n, data)?,
            y,
            theta,
        })
    }
}

/// Exact `sup_y |F̂(y) - F(y)|` for a step `F̂` and continuous `F`: only the
/// jump points and their left limits need checking.
pub fn sup_distance(est: &StepDistribution, truth: impl Fn(f64) -> f64) -> f64 {
    let mut prev = 0.0;
    let mut worst: f64 = 0.0;
    for (&x, &c) in est.points().iter().zip(est.cumprobs()) {
        let t = truth(x);
        worst = worst.max((c - t).abs()).max((prev - t).abs());
        prev = c;
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupError {
    pub value: f64,
    /// Evaluation points inside the trimmed index window.
    pub n_interior: usize,
    /// No evaluation point survived trimming; `value` is then 0.
    pub degenerate: bool,
}

/// Half-width of the interior window, `(log n / n)^{1/3}`.
pub fn window_half_width(n: usize) -> f64 {
    let n = n as f64;
    (n.ln() / n).cbrt()
}

/// Largest deviation between predicted and true conditional CDFs over the
/// evaluation rows whose estimated index `θ̂(x)` satisfies
/// `[θ̂(x) ± δ_n] ⊆ I`, where `I` spans the central 80% of the first member's
/// training index values and `δ_n = (log n / n)^{1/3}`.
pub fn sup_error(model: &DimModel, dgp: &SyntheticDgp, eval: &DesignMatrix) -> Result<SupError> {
    sup_error_with(model, dgp, eval, Execution::default())
}

pub fn sup_error_with(
    model: &DimModel,
    dgp: &SyntheticDgp,
    eval: &DesignMatrix,
    exec: Execution,
) -> Result<SupError> {
    let theta: Vec<f64> = (0..eval.n_rows()).map(|i| dgp.true_index(eval.row(i))).collect();
    let covariates = match model.config.index_source {
        IndexSource::BuiltinOls => Covariates::Design(eval),
        IndexSource::ExternalColumn => Covariates::Index(&theta),
    };
    let first = &model.members[0];
    let est_index = match &first.index {
        crate::dim::MemberIndex::Linear(m) => m.index_values(eval)?,
        crate::dim::MemberIndex::External => theta.clone(),
    };
    let train = first.idr.indices();
    let (lo, hi) = central_range(train, first.idr.counts(), 0.8);
    let delta = window_half_width(model.metadata.n_train);
    let keep: Vec<usize> = (0..eval.n_rows())
        .filter(|&i| est_index[i] - delta >= lo && est_index[i] + delta <= hi)
        .collect();
    if keep.is_empty() {
        return Ok(SupError {
            value: 0.0,
            n_interior: 0,
            degenerate: true,
        });
    }
    let preds = match covariates {
        Covariates::Design(d) => predict_dim_with(model, Covariates::Design(&d.select_rows(&keep)), exec)?,
        Covariates::Index(u) => {
            let sub: Vec<f64> = keep.iter().map(|&i| u[i]).collect();
            predict_dim_with(model, Covariates::Index(&sub), exec)?
        }
    };
    let family = dgp.family();
    let value = keep
        .iter()
        .zip(&preds)
        .map(|(&i, f)| sup_distance(f, |y| family.cdf(theta[i], y)))
        .fold(0.0, f64::max);
    Ok(SupError {
        value,
        n_interior: keep.len(),
        degenerate: false,
    })
}

/// Interval between the `(1 - mass)/2` and `(1 + mass)/2` weighted quantiles
/// of sorted unique values with multiplicities.
fn central_range(values: &[f64], counts: &[u64], mass: f64) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let q = |level: f64| {
        let target = level * total as f64;
        let mut acc = 0u64;
        for (v, &c) in values.iter().zip(counts) {
            acc += c;
            if acc as f64 >= target {
                return *v;
            }
        }
        *values.last().expect("nonempty")
    };
    (q((1.0 - mass) / 2.0), q((1.0 + mass) / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    pub xi: f64,
    pub n_splits: usize,
    /// Fresh covariate rows per replication for the sup error.
    pub n_eval: usize,
    /// Use the true index instead of the OLS estimate.
    pub true_index: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            xi: 0.5,
            n_splits: 1,
            n_eval: 500,
            true_index: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentResult {
    pub sizes: Vec<usize>,
    pub reps: usize,
    /// `errors[size][rep]`.
    pub errors: Vec<Vec<f64>>,
    pub median_errors: Vec<f64>,
    /// `median · (n / log n)^{1/3}`.
    pub normalized: Vec<f64>,
}

impl RateExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,reps,median_sup_error,normalized_error\n");
        for ((n, m), z) in self.sizes.iter().zip(&self.median_errors).zip(&self.normalized) {
            s.push_str(&format!("{n},{},{m},{z}\n", self.reps));
        }
        s
    }
}

/// Fits a DIM on one replication and returns its sup error.
pub fn replicate(
    dgp: &SyntheticDgp,
    n: usize,
    stream: u64,
    options: &RateOptions,
    exec: Execution,
) -> Result<SupError> {
    // even streams for training data, odd streams for evaluation rows
    let train = dgp.generate_stream(n, 2 * stream)?;
    let eval = dgp.generate_stream(options.n_eval, 2 * stream + 1)?;
    let config = DimConfig {
        xi: options.xi,
        n_splits: options.n_splits,
        seed: dgp.seed() ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        transform: ResponseTransform::Identity,
        index_source: if options.true_index {
            IndexSource::ExternalColumn
        } else {
            IndexSource::BuiltinOls
        },
        no_split: false,
    };
    let covariates = if options.true_index {
        Covariates::Index(&train.theta)
    } else {
        Covariates::Design(&train.x)
    };
    let model = fit_dim_with(covariates, &train.y, &config, Execution::Sequential)?;
    sup_error_with(&model, dgp, &eval.x, exec)
}

pub fn rate_experiment(
    dgp: &SyntheticDgp,
    sizes: &[usize],
    reps: usize,
    options: &RateOptions,
) -> Result<RateExperimentResult> {
    rate_experiment_with(dgp, sizes, reps, options, Execution::default())
}

/// Median sup error per sample size over `reps` replications. Replications
/// run in parallel under `exec`, each on its own generator stream.
pub fn rate_experiment_with(
    dgp: &SyntheticDgp,
    sizes: &[usize],
    reps: usize,
    options: &RateOptions,
    exec: Execution,
) -> Result<RateExperimentResult> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sample sizes must be nonempty and increasing"));
    }
    if reps == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..reps).map(move |r| (s, r)))
        .collect();
    let results = exec.map_slice(&jobs, |&(s, r)| {
        replicate(dgp, sizes[s], (s * reps + r) as u64, options, Execution::Sequential)
    });
    let mut errors = vec![Vec::with_capacity(reps); sizes.len()];
    for (&(s, _), res) in jobs.iter().zip(results) {
        errors[s].push(res?.value);
    }
    let median_errors: Vec<f64> = errors.iter().map(|e| median(e)).collect();
    let normalized = sizes
        .iter()
        .zip(&median_errors)
        .map(|(&n, &e)| e / window_half_width(n))
        .collect();
    Ok(RateExperimentResult {
        sizes: sizes.to_vec(),
        reps,
        errors,
        median_errors,
        normalized,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
