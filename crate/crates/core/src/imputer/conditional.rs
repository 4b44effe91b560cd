//! Draws of a unit's missing entries from their full conditional at a fixed
//! parameter value.
//!
//! The missing covariates have density proportional to
//! `f(X_mis | X_obs) · f(Y | X, A) · f(A | X) · Π f(R | X, A)`, where the
//! outcome factor is present only when `Y` is observed and the missingness
//! factors only under the MNAR mechanism. The Gaussian part is sampled
//! exactly and the probit factors are handled by rejection, falling back
//! to a short data-augmentation chain when the acceptance rate is tiny.
//! A missing outcome is then drawn from `Y | X, A`.

use std::collections::HashMap;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::spec::{JointModelSpec, MissingnessModel};
use crate::data::{CompleteData, ObservedDataset, ThetaParams};
use crate::error::Result;
use crate::{linalg, normal};

const MAX_PROPOSALS: usize = 10_000;
const FALLBACK_SWEEPS: usize = 200;

#[derive(Debug, Clone, Copy)]
enum FactorSource {
    Treatment,
    Covariate(usize),
    Outcome,
}

#[derive(Debug, Clone)]
struct Factor {
    source: FactorSource,
    /// Coefficients on the missing coordinates.
    g: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ArmPosterior {
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    /// Outcome coefficients on the missing coordinates.
    b: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Pattern {
    mis: Vec<usize>,
    obs: Vec<usize>,
    /// `Σ_mo Σ_oo⁻¹`.
    regression: DMatrix<f64>,
    cov: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    chol: DMatrix<f64>,
    arms: [ArmPosterior; 2],
    factors: Vec<Factor>,
}

/// Full-conditional sampler for every missingness pattern of a dataset.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    spec: JointModelSpec,
    theta: ThetaParams,
    index: HashMap<Vec<bool>, usize>,
    patterns: Vec<Pattern>,
}

fn lower_chol(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    Ok(linalg::cholesky(m, context)?.l())
}

fn model_gradient(model: &MissingnessModel, gamma: &DVector<f64>, mis: &[usize]) -> Vec<f64> {
    mis.iter()
        .map(|&j| {
            model
                .predictors
                .iter()
                .zip(gamma.iter())
                .filter(|(pr, _)| matches!(pr, super::spec::Predictor::Covariate(c) if *c == j))
                .map(|(_, g)| g)
                .sum()
        })
        .collect()
}

impl ConditionalSampler {
    pub fn new(spec: &JointModelSpec, theta: &ThetaParams, data: &ObservedDataset) -> Result<Self> {
        let mut sampler = ConditionalSampler {
            spec: spec.clone(),
            theta: theta.clone(),
            index: HashMap::new(),
            patterns: Vec::new(),
        };
        for i in 0..data.n() {
            let mask = data.mask_row(i);
            if mask.iter().all(|&o| o) || sampler.index.contains_key(mask) {
                continue;
            }
            let pattern = sampler.build(mask)?;
            sampler.index.insert(mask.to_vec(), sampler.patterns.len());
            sampler.patterns.push(pattern);
        }
        Ok(sampler)
    }

    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }

    fn build(&self, mask: &[bool]) -> Result<Pattern> {
        let th = &self.theta;
        let mis: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
        let obs: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
        let s = &th.sigma_x;
        let s_mm = s.select_rows(&mis).select_columns(&mis);
        let (regression, cov) = if obs.is_empty() {
            (DMatrix::zeros(mis.len(), 0), s_mm)
        } else {
            let s_mo = s.select_rows(&mis).select_columns(&obs);
            let s_oo = s.select_rows(&obs).select_columns(&obs);
            let s_oo_inv = linalg::spd_inverse(&s_oo, "observed covariate block")?;
            let k = &s_mo * s_oo_inv;
            let cov = linalg::symmetrize(&(s_mm - &k * s_mo.transpose()));
            (k, cov)
        };
        let cov_inv = linalg::spd_inverse(&cov, "conditional covariate covariance")?;
        let chol = lower_chol(&cov, "conditional covariate covariance")?;
        let arm = |a: u8| -> Result<ArmPosterior> {
            let b: Vec<f64> = mis.iter().map(|&j| th.beta(a)[1 + j]).collect();
            let bv = DVector::from_column_slice(&b);
            let prec = &cov_inv + &bv * bv.transpose() / th.sigma(a).powi(2);
            let post = linalg::spd_inverse(&prec, "covariate posterior precision")?;
            Ok(ArmPosterior {
                chol: lower_chol(&post, "covariate posterior covariance")?,
                cov: post,
                b,
            })
        };
        let arms = [arm(0)?, arm(1)?];
        let mut factors = vec![Factor {
            source: FactorSource::Treatment,
            g: mis.iter().map(|&j| th.alpha[1 + j]).collect(),
        }];
        for ((j, model), gamma) in self.spec.active_covariate_models().iter().zip(&th.gamma_x) {
            if mis.iter().any(|&m| model.uses_covariate(m)) {
                factors.push(Factor {
                    source: FactorSource::Covariate(*j),
                    g: model_gradient(model, gamma, &mis),
                });
            }
        }
        if let (Some(model), Some(gamma)) = (self.spec.active_outcome_model(), &th.gamma_y) {
            if mis.iter().any(|&m| model.uses_covariate(m)) {
                factors.push(Factor {
                    source: FactorSource::Outcome,
                    g: model_gradient(model, gamma, &mis),
                });
            }
        }
        Ok(Pattern {
            mis,
            obs,
            regression,
            cov,
            cov_inv,
            chol,
            arms,
            factors,
        })
    }

    fn pattern(&self, mask: &[bool]) -> &Pattern {
        &self.patterns[*self.index.get(mask).expect("pattern registered at construction")]
    }

    /// Mean and covariance of the Gaussian part of the missing-covariate
    /// conditional for unit `i` (exact when no probit factor applies).
    pub fn gaussian_part(&self, data: &ObservedDataset, i: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let mask = data.mask_row(i);
        if mask.iter().all(|&o| o) {
            return None;
        }
        let pat = self.pattern(mask);
        let x: Vec<f64> = data.covariate_row(i).iter().map(|v| v.unwrap_or(0.0)).collect();
        Some(self.gaussian(pat, data.treatment(i), &x, data.outcome(i)))
    }

    fn gaussian(&self, pat: &Pattern, a: u8, x: &[f64], y: Option<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let th = &self.theta;
        let mu = &th.mu_x;
        let d_obs = DVector::from_iterator(pat.obs.len(), pat.obs.iter().map(|&j| x[j] - mu[j]));
        let prior_mean = DVector::from_iterator(pat.mis.len(), pat.mis.iter().map(|&j| mu[j])) + &pat.regression * d_obs;
        match y {
            None => (prior_mean, pat.cov.clone()),
            Some(y) => {
                let arm = &pat.arms[a as usize];
                let beta = th.beta(a);
                let c = beta[0] + pat.obs.iter().map(|&j| beta[1 + j] * x[j]).sum::<f64>();
                let s2 = th.sigma(a).powi(2);
                let b = DVector::from_column_slice(&arm.b);
                let rhs = &pat.cov_inv * prior_mean + b * ((y - c) / s2);
                (&arm.cov * rhs, arm.cov.clone())
            }
        }
    }

    /// Linear-predictor constants (missing coordinates set to zero) and the
    /// observed response of each factor.
    fn factor_terms(&self, pat: &Pattern, a: u8, x_zeroed: &[f64], r_x: &[bool], r_y: bool) -> Vec<(f64, bool)> {
        let th = &self.theta;
        let mut w = Vec::new();
        pat.factors
            .iter()
            .map(|f| match f.source {
                FactorSource::Treatment => {
                    let eta = th.alpha[0] + x_zeroed.iter().enumerate().map(|(j, v)| th.alpha[1 + j] * v).sum::<f64>();
                    (eta, a == 1)
                }
                FactorSource::Covariate(j) => {
                    let idx = self
                        .spec
                        .active_covariate_models()
                        .iter()
                        .position(|(c, _)| *c == j)
                        .expect("factor built from an active model");
                    let model = &self.spec.active_covariate_models()[idx].1;
                    w.resize(model.len(), 0.0);
                    model.row(a as f64, x_zeroed, 0.0, &mut w);
                    (w.iter().zip(th.gamma_x[idx].iter()).map(|(p, q)| p * q).sum(), r_x[j])
                }
                FactorSource::Outcome => {
                    let model = self.spec.active_outcome_model().expect("factor built from an active model");
                    let gamma = th.gamma_y.as_ref().expect("outcome model has coefficients");
                    w.resize(model.len(), 0.0);
                    model.row(a as f64, x_zeroed, 0.0, &mut w);
                    (w.iter().zip(gamma.iter()).map(|(p, q)| p * q).sum(), r_y)
                }
            })
            .collect()
    }

    /// Draw unit `i`'s missing entries. `x` receives the completed covariate
    /// row; the completed outcome is returned.
    pub fn draw_row<R: Rng + ?Sized>(&self, data: &ObservedDataset, i: usize, rng: &mut R, x: &mut [f64]) -> f64 {
        let a = data.treatment(i);
        let mask = data.mask_row(i);
        for (xj, v) in x.iter_mut().zip(data.covariate_row(i)) {
            *xj = v.unwrap_or(0.0);
        }
        if !mask.iter().all(|&o| o) {
            let pat = self.pattern(mask);
            let y = data.outcome(i);
            let (mean, cov_chol) = match y {
                None => (self.gaussian(pat, a, x, None).0, &pat.chol),
                Some(_) => (self.gaussian(pat, a, x, y).0, &pat.arms[a as usize].chol),
            };
            let terms = self.factor_terms(pat, a, x, mask, data.outcome_observed(i));
            let draw = self.sample_missing(pat, &mean, cov_chol, &terms, rng);
            for (k, &j) in pat.mis.iter().enumerate() {
                x[j] = draw[k];
            }
        }
        match data.outcome(i) {
            Some(y) => y,
            None => {
                let beta = self.theta.beta(a);
                let eta = beta[0] + x.iter().enumerate().map(|(j, v)| beta[1 + j] * v).sum::<f64>();
                eta + self.theta.sigma(a) * normal::draw(rng)
            }
        }
    }

    fn sample_missing<R: Rng + ?Sized>(
        &self,
        pat: &Pattern,
        mean: &DVector<f64>,
        chol: &DMatrix<f64>,
        terms: &[(f64, bool)],
        rng: &mut R,
    ) -> DVector<f64> {
        let k = mean.len();
        let mut z = DVector::zeros(k);
        let mut last = mean.clone();
        for _ in 0..MAX_PROPOSALS {
            for zi in z.iter_mut() {
                *zi = normal::draw(rng);
            }
            let cand = mean + chol * &z;
            let mut accept = 1.0;
            for (f, &(c, positive)) in pat.factors.iter().zip(terms) {
                let eta = c + f.g.iter().zip(cand.iter()).map(|(g, v)| g * v).sum::<f64>();
                accept *= normal::cdf(if positive { eta } else { -eta });
            }
            if rng.random::<f64>() < accept {
                return cand;
            }
            last = cand;
        }
        debug!("rejection sampler exhausted; using data-augmentation fallback");
        self.augmentation_chain(pat, mean, chol, terms, last, rng)
    }

    fn augmentation_chain<R: Rng + ?Sized>(
        &self,
        pat: &Pattern,
        mean: &DVector<f64>,
        chol: &DMatrix<f64>,
        terms: &[(f64, bool)],
        start: DVector<f64>,
        rng: &mut R,
    ) -> DVector<f64> {
        let k = mean.len();
        let cov = chol * chol.transpose();
        let base_prec = linalg::spd_inverse(&cov, "fallback covariance").expect("factor of an SPD matrix");
        let mut prec = base_prec.clone();
        for f in &pat.factors {
            let g = DVector::from_column_slice(&f.g);
            prec += &g * g.transpose();
        }
        let prec_chol = linalg::cholesky(&prec, "fallback precision").expect("SPD plus PSD");
        let base_rhs = &base_prec * mean;
        let mut x = start;
        for _ in 0..FALLBACK_SWEEPS {
            let mut rhs = base_rhs.clone();
            for (f, &(c, positive)) in pat.factors.iter().zip(terms) {
                let g = DVector::from_column_slice(&f.g);
                let eta = c + g.dot(&x);
                let latent = normal::draw_truncated(eta, positive, rng);
                rhs += g * (latent - c);
            }
            let m = prec_chol.solve(&rhs);
            x = linalg::draw_from_precision(&m, &prec_chol, rng);
        }
        debug_assert_eq!(x.len(), k);
        x
    }

    /// A completed copy of the whole dataset.
    pub fn complete<R: Rng + ?Sized>(&self, data: &ObservedDataset, rng: &mut R) -> CompleteData {
        let p = data.p();
        let n = data.n();
        let mut xs = vec![0.0; n * p];
        let mut ys = vec![0.0; n];
        for i in 0..n {
            ys[i] = self.draw_row(data, i, rng, &mut xs[i * p..(i + 1) * p]);
        }
        let a = data.treatments().iter().map(|&t| t as f64).collect();
        CompleteData::new(a, xs, ys, p)
    }
}

/// `L` independent completions of unit `i` at a fixed `θ`.
pub fn predictive_conditional<R: Rng + ?Sized>(
    data: &ObservedDataset,
    i: usize,
    theta: &ThetaParams,
    spec: &JointModelSpec,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let row = ObservedDataset::from_parts(
        vec![data.treatment(i)],
        vec![data.outcome(i)],
        vec![data.outcome_observed(i)],
        data.covariate_row(i).to_vec(),
        data.mask_row(i).to_vec(),
        data.p(),
    );
    let sampler = ConditionalSampler::new(spec, theta, &row)?;
    Ok((0..draws)
        .map(|_| {
            let mut x = vec![0.0; data.p()];
            let y = sampler.draw_row(&row, 0, rng, &mut x);
            (x, y)
        })
        .collect())
}
