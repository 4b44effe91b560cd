use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ObservedDataset;
use crate::error::{Error, Result};

/// Missing-data mechanism assumed by the imputation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    /// Missingness depends on observed data only; missingness models are
    /// ignorable and left out of the sampler.
    Mar,
    /// Missingness may depend on the missing covariates but not on `Y`
    /// given `(A, X)`.
    MnarOutcomeIndependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predictor {
    Intercept,
    Treatment,
    Covariate(usize),
    Outcome,
}

/// Probit model for one missingness indicator (1 = observed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessModel {
    pub predictors: Vec<Predictor>,
}

impl MissingnessModel {
    pub fn new(predictors: Vec<Predictor>) -> Self {
        MissingnessModel { predictors }
    }

    /// `{1, A, X_1, …, X_p}`.
    pub fn treatment_and_covariates(p: usize) -> Self {
        let mut predictors = vec![Predictor::Intercept, Predictor::Treatment];
        predictors.extend((0..p).map(Predictor::Covariate));
        MissingnessModel { predictors }
    }

    pub fn len(&self) -> usize {
        self.predictors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictors.is_empty()
    }

    pub fn covariates(&self) -> impl Iterator<Item = usize> + '_ {
        self.predictors.iter().filter_map(|p| match p {
            Predictor::Covariate(j) => Some(*j),
            _ => None,
        })
    }

    pub fn uses_covariate(&self, j: usize) -> bool {
        self.covariates().any(|c| c == j)
    }

    /// Predictor values for one unit.
    pub fn row(&self, a: f64, x: &[f64], y: f64, out: &mut [f64]) {
        for (o, pr) in out.iter_mut().zip(&self.predictors) {
            *o = match *pr {
                Predictor::Intercept => 1.0,
                Predictor::Treatment => a,
                Predictor::Covariate(j) => x[j],
                Predictor::Outcome => y,
            };
        }
    }
}

/// Joint model: per-arm linear-Gaussian outcome, probit treatment,
/// multivariate normal covariates, and (under MNAR) probit missingness
/// models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModelSpec {
    pub p: usize,
    pub mechanism: Mechanism,
    /// `(column, model)` pairs for covariate missingness indicators.
    pub covariate_models: Vec<(usize, MissingnessModel)>,
    pub outcome_model: Option<MissingnessModel>,
}

impl JointModelSpec {
    pub fn mar(p: usize) -> Self {
        JointModelSpec {
            p,
            mechanism: Mechanism::Mar,
            covariate_models: Vec::new(),
            outcome_model: None,
        }
    }

    /// MNAR model with a `{1, A, X}` probit for every covariate that has
    /// missing values, and for `Y` when it has any.
    pub fn mnar_default(data: &ObservedDataset) -> Self {
        let p = data.p();
        let covariate_models = (0..p)
            .filter(|&j| data.column_missing_count(j) > 0)
            .map(|j| (j, MissingnessModel::treatment_and_covariates(p)))
            .collect();
        let outcome_model = (0..data.n())
            .any(|i| !data.outcome_observed(i))
            .then(|| MissingnessModel::treatment_and_covariates(p));
        JointModelSpec {
            p,
            mechanism: Mechanism::MnarOutcomeIndependent,
            covariate_models,
            outcome_model,
        }
    }

    pub fn for_mechanism(mechanism: Mechanism, data: &ObservedDataset) -> Self {
        match mechanism {
            Mechanism::Mar => Self::mar(data.p()),
            Mechanism::MnarOutcomeIndependent => Self::mnar_default(data),
        }
    }

    /// Missingness models that enter the likelihood.
    pub fn active_covariate_models(&self) -> &[(usize, MissingnessModel)] {
        match self.mechanism {
            Mechanism::Mar => &[],
            Mechanism::MnarOutcomeIndependent => &self.covariate_models,
        }
    }

    pub fn active_outcome_model(&self) -> Option<&MissingnessModel> {
        match self.mechanism {
            Mechanism::Mar => None,
            Mechanism::MnarOutcomeIndependent => self.outcome_model.as_ref(),
        }
    }

    /// Structural checks against a dataset.
    pub fn check(&self, data: &ObservedDataset) -> Result<()> {
        if self.p != data.p() {
            return Err(Error::Config(format!(
                "model has {} covariates, data has {}",
                self.p,
                data.p()
            )));
        }
        let models = self.covariate_models.iter().map(|(j, m)| (Some(*j), m));
        let models = models.chain(self.outcome_model.iter().map(|m| (None, m)));
        for (target, model) in models {
            if let Some(j) = target {
                if j >= self.p {
                    return Err(Error::Config(format!("missingness model for unknown covariate {j}")));
                }
            }
            if model.is_empty() {
                return Err(Error::Config("missingness model without predictors".into()));
            }
            for pr in &model.predictors {
                match (*pr, self.mechanism) {
                    (Predictor::Covariate(c), _) if c >= self.p => {
                        return Err(Error::Config(format!("predictor refers to unknown covariate {c}")));
                    }
                    (Predictor::Covariate(c), Mechanism::Mar) if data.column_missing_count(c) > 0 => {
                        return Err(Error::Config(format!(
                            "MAR missingness model uses covariate {c}, which has missing values"
                        )));
                    }
                    (Predictor::Outcome, Mechanism::MnarOutcomeIndependent) => {
                        return Err(Error::Config(
                            "outcome-independent MNAR model may not use the outcome as a predictor".into(),
                        ));
                    }
                    (Predictor::Outcome, Mechanism::Mar) if target.is_none() => {
                        return Err(Error::Config("outcome missingness model may not use the outcome".into()));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Variance of the independent normal prior on every coefficient.
    pub coef_variance: f64,
    /// Gamma(shape, rate) prior on each outcome precision `σ_a⁻²`.
    pub precision_shape: f64,
    pub precision_rate: f64,
    pub mu_mean: DVector<f64>,
    pub mu_variance: f64,
    /// Inverse-Wishart scale and degrees of freedom for `Σ_X`.
    pub sigma_scale: DMatrix<f64>,
    pub sigma_df: f64,
}

impl PriorSpec {
    pub fn new(p: usize) -> Self {
        PriorSpec {
            coef_variance: 100.0,
            precision_shape: 0.01,
            precision_rate: 0.01,
            mu_mean: DVector::zeros(p),
            mu_variance: 100.0,
            sigma_scale: DMatrix::identity(p, p),
            sigma_df: p as f64 + 2.0,
        }
    }

    pub fn check(&self, p: usize) -> Result<()> {
        let positive = [
            ("coef_variance", self.coef_variance),
            ("precision_shape", self.precision_shape),
            ("precision_rate", self.precision_rate),
            ("mu_variance", self.mu_variance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("prior {name} must be positive, got {v}")));
            }
        }
        if self.mu_mean.len() != p || self.sigma_scale.nrows() != p || self.sigma_scale.ncols() != p {
            return Err(Error::Config(format!("prior dimensions do not match p = {p}")));
        }
        if self.sigma_df <= p as f64 - 1.0 {
            return Err(Error::Config(format!(
                "inverse-Wishart degrees of freedom must exceed {}",
                p as f64 - 1.0
            )));
        }
        crate::linalg::cholesky(&self.sigma_scale, "prior scale matrix").map_err(|_| {
            Error::Config("prior scale matrix is not positive-definite".into())
        })?;
        Ok(())
    }
}

/// How the `m` parameter draws are taken from the retained chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// Uniformly random distinct retained iterations.
    Random,
    /// Evenly spaced retained iterations.
    Thinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub m: usize,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iterations: 5000,
            burn_in: 2000,
            m: 5,
            selection: Selection::Random,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in)
    }

    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "need 0 <= burn_in < iterations, got burn_in = {}, iterations = {}",
                self.burn_in, self.iterations
            )));
        }
        if self.m == 0 || self.m > self.retained() {
            return Err(Error::Config(format!(
                "m = {} must be between 1 and the {} retained draws",
                self.m,
                self.retained()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_missing() -> ObservedDataset {
        ObservedDataset::new(
            vec![0, 1, 1],
            vec![Some(1.0), Some(2.0), None],
            vec![
                vec![Some(0.0), Some(1.0)],
                vec![Some(1.0), None],
                vec![Some(2.0), Some(0.5)],
            ],
        )
    }

    #[test]
    fn mnar_default_models_missing_columns_only() {
        let spec = JointModelSpec::mnar_default(&one_missing());
        assert_eq!(spec.covariate_models.len(), 1);
        assert_eq!(spec.covariate_models[0].0, 1);
        assert!(spec.outcome_model.is_some());
        spec.check(&one_missing()).unwrap();
    }

    #[test]
    fn mar_rejects_missing_covariate_predictor() {
        let mut spec = JointModelSpec::mar(2);
        spec.covariate_models.push((1, MissingnessModel::treatment_and_covariates(2)));
        assert!(spec.check(&one_missing()).is_err());
    }

    #[test]
    fn mnar_rejects_outcome_predictor() {
        let mut spec = JointModelSpec::mnar_default(&one_missing());
        spec.covariate_models[0].1.predictors.push(Predictor::Outcome);
        assert!(spec.check(&one_missing()).is_err());
    }

    #[test]
    fn config_bounds() {
        let cfg = GibbsConfig {
            iterations: 10,
            burn_in: 10,
            ..GibbsConfig::default()
        };
        assert!(cfg.check().is_err());
        let cfg = GibbsConfig {
            iterations: 10,
            burn_in: 4,
            m: 7,
            ..GibbsConfig::default()
        };
        assert!(cfg.check().is_err());
        assert!(PriorSpec::new(2).check(2).is_ok());
    }
}
