//! Two-stage DIM estimation with bagging over random splits.
//!
//! Each member draws a random partition of the training rows. The first
//! `⌈nξ⌉` rows of the partition (part one) carry the IDR fit; the remaining
//! rows (part two) estimate the pseudo-index. Predictions average the member
//! CDFs with equal weights.
//!
//! Member `b` draws its partitions from `ChaCha20Rng::seed_from_u64(seed)`
//! switched to stream `b`, so every member is reproducible on its own and the
//! model does not depend on thread scheduling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::Encoding;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::idr::{self, IdrFit, TrainingPairs};
use crate::index::{fit_ols_index, DesignMatrix, IndexModel, ResponseTransform};
use crate::stepdist::{mixture, StepDistribution};

pub const SCHEMA_VERSION: u32 = 1;
/// Fresh partitions tried after a rank-deficient index fit.
pub const MAX_SPLIT_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSource {
    #[default]
    BuiltinOls,
    ExternalColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimConfig {
    /// Fraction of rows in the IDR part.
    pub xi: f64,
    pub n_splits: usize,
    pub seed: u64,
    pub transform: ResponseTransform,
    pub index_source: IndexSource,
    /// Fit index and IDR on all rows. Breaks the independence the
    /// consistency argument relies on; kept for comparison runs.
    #[serde(default)]
    pub no_split: bool,
}

impl Default for DimConfig {
    fn default() -> Self {
        Self {
            xi: 0.5,
            n_splits: 100,
            seed: 0,
            transform: ResponseTransform::Identity,
            index_source: IndexSource::BuiltinOls,
            no_split: false,
        }
    }
}

impl DimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::invalid(format!("split fraction {} outside (0, 1)", self.xi)));
        }
        if self.n_splits == 0 {
            return Err(Error::invalid("number of splits must be at least 1"));
        }
        Ok(())
    }

    /// Rows in the IDR part, `⌈nξ⌉`.
    pub fn idr_rows(&self, n: usize) -> usize {
        ((n as f64) * self.xi).ceil() as usize
    }
}

/// Covariate input: an expanded design for the built-in index, or
/// precomputed index values.
#[derive(Debug, Clone, Copy)]
pub enum Covariates<'a> {
    Design(&'a DesignMatrix),
    Index(&'a [f64]),
}

impl Covariates<'_> {
    pub fn n_rows(&self) -> usize {
        match self {
            Covariates::Design(x) => x.n_rows(),
            Covariates::Index(u) => u.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberIndex {
    Linear(IndexModel),
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub index: MemberIndex,
    pub idr: IdrFit,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    pub n_train: usize,
    /// Design columns, or the single external index column name.
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Encoding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimModel {
    pub schema_version: u32,
    pub config: DimConfig,
    pub members: Vec<Member>,
    pub metadata: Metadata,
}

impl DimModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::Schema(format!(
                    "unsupported model schema_version {v}, expected {SCHEMA_VERSION}"
                )))
            }
            None => return Err(Error::Schema("model file lacks schema_version".into())),
        }
        let model: DimModel = serde_json::from_value(value)?;
        if model.members.is_empty() {
            return Err(Error::Schema("model has no members".into()));
        }
        Ok(model)
    }
}

/// Fits a DIM with the default execution strategy.
pub fn fit_dim(x: Covariates<'_>, y: &[f64], config: &DimConfig) -> Result<DimModel> {
    fit_dim_with(x, y, config, Execution::default())
}

pub fn fit_dim_with(
    x: Covariates<'_>,
    y: &[f64],
    config: &DimConfig,
    exec: Execution,
) -> Result<DimModel> {
    config.validate()?;
    let n = y.len();
    if x.n_rows() != n {
        return Err(Error::invalid(format!(
            "{} covariate rows but {n} responses",
            x.n_rows()
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite response {v}")));
    }
    let columns = match (x, config.index_source) {
        (Covariates::Design(d), IndexSource::BuiltinOls) => {
            let p = d.n_cols();
            if n < 2.max(p + 1) {
                return Err(Error::invalid(format!(
                    "{n} rows are too few for {p} covariates"
                )));
            }
            if !config.no_split && n - config.idr_rows(n) < p {
                return Err(Error::invalid(format!(
                    "index part has {} rows, needs at least {p}",
                    n - config.idr_rows(n)
                )));
            }
            d.columns().to_vec()
        }
        (Covariates::Index(u), IndexSource::ExternalColumn) => {
            if n < 2 {
                return Err(Error::invalid("DIM needs at least two rows"));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("external index contains non-finite values"));
            }
            vec!["index".to_string()]
        }
        _ => {
            return Err(Error::invalid(
                "covariate kind does not match the configured index source",
            ))
        }
    };

    let members = if config.no_split {
        let all: Vec<usize> = (0..n).collect();
        vec![fit_member(x, y, config, &all, &all, exec)?]
    } else {
        exec.map_range(config.n_splits, |b| fit_split_member(x, y, config, b, exec))
            .into_iter()
            .collect::<Result<Vec<_>>>()?
    };

    Ok(DimModel {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        members,
        metadata: Metadata {
            n_train: n,
            columns,
            response: None,
            encoding: None,
        },
    })
}

/// Random generator for member `b`.
pub fn member_rng(seed: u64, b: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// Partition `(idr_part, index_part)` drawn for one attempt.
pub fn draw_split(rng: &mut ChaCha20Rng, n: usize, n1: usize) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let index_part = perm.split_off(n1);
    (perm, index_part)
}

fn fit_split_member(
    x: Covariates<'_>,
    y: &[f64],
    config: &DimConfig,
    b: usize,
    exec: Execution,
) -> Result<Member> {
    let n = y.len();
    let n1 = config.idr_rows(n);
    let mut rng = member_rng(config.seed, b);
    let mut last_err = None;
    for _ in 0..=MAX_SPLIT_RETRIES {
        let (idr_part, index_part) = draw_split(&mut rng, n, n1);
        match fit_member(x, y, config, &idr_part, &index_part, exec) {
            Err(e @ Error::RankDeficient { .. }) => last_err = Some(e),
            other => return other,
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn fit_member(
    x: Covariates<'_>,
    y: &[f64],
    config: &DimConfig,
    idr_part: &[usize],
    index_part: &[usize],
    exec: Execution,
) -> Result<Member> {
    let y_idr: Vec<f64> = idr_part.iter().map(|&i| y[i]).collect();
    let (index, theta) = match x {
        Covariates::Design(d) => {
            let y_index: Vec<f64> = index_part.iter().map(|&i| y[i]).collect();
            let model = fit_ols_index(&d.select_rows(index_part), &y_index, config.transform)?;
            let theta = model.index_values(&d.select_rows(idr_part))?;
            (MemberIndex::Linear(model), theta)
        }
        Covariates::Index(u) => (
            MemberIndex::External,
            idr_part.iter().map(|&i| u[i]).collect(),
        ),
    };
    let idr = idr::fit_with(&TrainingPairs::new(theta, y_idr)?, exec)?;
    Ok(Member { index, idr })
}

/// Index value of every new row under every member, `[row][member]`.
fn member_indices(model: &DimModel, x: Covariates<'_>) -> Result<Vec<Vec<f64>>> {
    let n = x.n_rows();
    let mut per_member = Vec::with_capacity(model.members.len());
    for m in &model.members {
        let values = match (&m.index, x) {
            (MemberIndex::Linear(im), Covariates::Design(d)) => {
                if d.columns() != im.columns.as_slice() {
                    return Err(Error::invalid(format!(
                        "design columns {:?} do not match the model's {:?}",
                        d.columns(),
                        im.columns
                    )));
                }
                im.index_values(d)?
            }
            (MemberIndex::External, Covariates::Index(u)) => u.to_vec(),
            _ => {
                return Err(Error::invalid(
                    "covariate kind does not match the model's index source",
                ))
            }
        };
        per_member.push(values);
    }
    Ok((0..n)
        .map(|i| per_member.iter().map(|v| v[i]).collect())
        .collect())
}

/// Equal-weight mixture of the member predictions for every new row.
pub fn predict_dim(model: &DimModel, x: Covariates<'_>) -> Result<Vec<StepDistribution>> {
    predict_dim_with(model, x, Execution::default())
}

pub fn predict_dim_with(
    model: &DimModel,
    x: Covariates<'_>,
    exec: Execution,
) -> Result<Vec<StepDistribution>> {
    let indices = member_indices(model, x)?;
    let b = model.members.len();
    let weights = vec![1.0 / b as f64; b];
    exec.map_slice(&indices, |us| {
        let comps = model
            .members
            .iter()
            .zip(us)
            .map(|(m, &u)| m.idr.predict(u))
            .collect::<Result<Vec<_>>>()?;
        mixture(&comps, &weights)
    })
    .into_iter()
    .collect()
}

/// Summed in-sample CRPS of the IDR fitted on `(index, y)`, i.e. the joint
/// index/distribution loss evaluated at its inner minimizer for this index.
pub fn simultaneous_loss(index: &[f64], y: &[f64]) -> Result<f64> {
    let data = TrainingPairs::new(index.to_vec(), y.to_vec())?;
    let fit = idr::fit(&data)?;
    Ok(fit.insample_crps(&data)? * data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn external(n_splits: usize, seed: u64) -> DimConfig {
        DimConfig {
            n_splits,
            seed,
            index_source: IndexSource::ExternalColumn,
            ..DimConfig::default()
        }
    }

    fn toy(n: usize) -> (Vec<f64>, Vec<f64>) {
        let u: Vec<f64> = (0..n).map(|i| ((i * 31) % 97) as f64 / 97.0).collect();
        let y: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, v)| v * 3.0 + ((i * 17) % 13) as f64 / 13.0)
            .collect();
        (u, y)
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (u, y) = toy(40);
        let a = fit_dim(Covariates::Index(&u), &y, &external(1, 9)).unwrap();
        let b = fit_dim(Covariates::Index(&u), &y, &external(1, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = fit_dim(Covariates::Index(&u), &y, &external(1, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn external_member_equals_idr_on_its_split() {
        let (u, y) = toy(41);
        let cfg = external(1, 3);
        let model = fit_dim(Covariates::Index(&u), &y, &cfg).unwrap();
        let mut rng = member_rng(3, 0);
        let (part, _) = draw_split(&mut rng, 41, cfg.idr_rows(41));
        assert_eq!(part.len(), 21);
        let data = TrainingPairs::new(
            part.iter().map(|&i| u[i]).collect(),
            part.iter().map(|&i| y[i]).collect(),
        )
        .unwrap();
        assert_eq!(model.members[0].idr, idr::fit(&data).unwrap());
    }

    #[test]
    fn constant_response_gives_point_masses() {
        let (u, _) = toy(20);
        let y = vec![4.0; 20];
        let model = fit_dim(Covariates::Index(&u), &y, &external(5, 1)).unwrap();
        let pm = StepDistribution::point_mass(4.0).unwrap();
        for d in predict_dim(&model, Covariates::Index(&[-1.0, 0.3, 9.0])).unwrap() {
            assert_eq!(d, pm);
        }
    }

    #[test]
    fn identical_members_predict_like_one() {
        let (u, y) = toy(30);
        let one = fit_dim(Covariates::Index(&u), &y, &external(1, 5)).unwrap();
        let mut many = one.clone();
        many.members = vec![one.members[0].clone(); 7];
        let q = [0.1, 0.45, 0.77];
        assert_eq!(
            predict_dim(&one, Covariates::Index(&q)).unwrap(),
            predict_dim(&many, Covariates::Index(&q)).unwrap()
        );
    }

    #[test]
    fn below_range_clamps_to_first_rows() {
        let (u, y) = toy(30);
        let model = fit_dim(Covariates::Index(&u), &y, &external(3, 2)).unwrap();
        let got = predict_dim(&model, Covariates::Index(&[-5.0])).unwrap();
        let firsts: Vec<_> = model.members.iter().map(|m| m.idr.row(0).clone()).collect();
        assert_eq!(got[0], mixture(&firsts, &[1.0 / 3.0; 3]).unwrap());
    }

    #[test]
    fn training_row_prediction_with_one_member() {
        let (u, y) = toy(30);
        let model = fit_dim(Covariates::Index(&u), &y, &external(1, 2)).unwrap();
        let fit = &model.members[0].idr;
        let u0 = fit.indices()[3];
        assert_eq!(&predict_dim(&model, Covariates::Index(&[u0])).unwrap()[0], fit.row(3));
    }

    #[test]
    fn builtin_ols_fits_and_predicts() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![1.0, (i % 10) as f64]).collect();
        let y: Vec<f64> = rows.iter().enumerate().map(|(i, r)| 2.0 * r[1] + (i % 3) as f64).collect();
        let x = DesignMatrix::unnamed(&rows).unwrap();
        let cfg = DimConfig {
            n_splits: 4,
            seed: 11,
            ..DimConfig::default()
        };
        let model = fit_dim(Covariates::Design(&x), &y, &cfg).unwrap();
        assert_eq!(model.members.len(), 4);
        let preds = predict_dim(&model, Covariates::Design(&x)).unwrap();
        assert_eq!(preds.len(), 60);
        for p in &preds {
            p.check_invariants().unwrap();
        }
        let narrow = DesignMatrix::unnamed(&[vec![1.0]]).unwrap();
        assert!(predict_dim(&model, Covariates::Design(&narrow)).is_err());
        assert!(predict_dim(&model, Covariates::Index(&[0.0])).is_err());
    }

    #[test]
    fn rank_deficient_design_errors_after_retries() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let x = DesignMatrix::unnamed(&rows).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let cfg = DimConfig {
            n_splits: 1,
            ..DimConfig::default()
        };
        let err = fit_dim(Covariates::Design(&x), &y, &cfg).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn insufficient_rows_rejected() {
        let x = DesignMatrix::unnamed(&[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        assert!(fit_dim(Covariates::Design(&x), &[1.0, 2.0], &DimConfig::default()).is_err());
        assert!(fit_dim(Covariates::Index(&[1.0]), &[1.0], &external(1, 0)).is_err());
        let bad_xi = DimConfig {
            xi: 1.0,
            ..external(1, 0)
        };
        assert!(fit_dim(Covariates::Index(&[1.0, 2.0]), &[1.0, 2.0], &bad_xi).is_err());
    }

    #[test]
    fn no_split_uses_all_rows() {
        let (u, y) = toy(25);
        let cfg = DimConfig {
            no_split: true,
            ..external(10, 0)
        };
        let model = fit_dim(Covariates::Index(&u), &y, &cfg).unwrap();
        assert_eq!(model.members.len(), 1);
        assert_eq!(model.members[0].idr.n_obs(), 25);
    }

    #[test]
    fn simultaneous_loss_examples() {
        assert_eq!(simultaneous_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(simultaneous_loss(&[1.0], &[7.0]).unwrap(), 0.0);
        let data = TrainingPairs::from_pairs(&[(1.0, 1.0), (2.0, 0.0), (3.0, 2.0)]).unwrap();
        let fit = idr::fit(&data).unwrap();
        let expected = 3.0 * fit.insample_crps(&data).unwrap();
        assert_eq!(simultaneous_loss(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).unwrap(), expected);
    }

    #[test]
    fn json_roundtrip_is_byte_identical() {
        let (u, y) = toy(30);
        let model = fit_dim(Covariates::Index(&u), &y, &external(2, 4)).unwrap();
        let s = model.to_json().unwrap();
        let back = DimModel::from_json(&s).unwrap();
        assert_eq!(back.to_json().unwrap(), s);
        let wrong = s.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
        assert!(matches!(DimModel::from_json(&wrong), Err(Error::Schema(_))));
    }
}
