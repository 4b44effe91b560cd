//! Full-sample ACE estimators on complete data: nuisance fits, point
//! estimates, influence functions and their variance.

mod influence;
pub mod matching;
mod ratio;

pub use influence::{influence, ArmInfluence, ExpectationTerms, InfluenceVector, PsiFunctional};
pub use ratio::{ratio_estimand, RatioEstimate, RatioKind};

use nalgebra::{DMatrix, DVector};

use crate::data::{CompleteData, EstimatorKind, MatchOn};
use crate::error::{Error, Result};
use crate::linalg;
use crate::normal;
use crate::probit;

/// Fitted propensities are clipped to `[PROPENSITY_CLIP, 1 − PROPENSITY_CLIP]`.
pub const PROPENSITY_CLIP: f64 = 1e-3;

pub fn clip_propensity(e: f64) -> f64 {
    e.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
}

#[derive(Debug, Clone, Default)]
pub struct NuisanceOptions {
    /// Covariate columns entering the propensity model (all when `None`).
    pub propensity_columns: Option<Vec<usize>>,
}

/// Outcome regressions per arm and the probit propensity model.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub beta0_hat: DVector<f64>,
    pub beta1_hat: DVector<f64>,
    pub sigma0_hat: f64,
    pub sigma1_hat: f64,
    pub alpha_hat: DVector<f64>,
    pub propensity_columns: Option<Vec<usize>>,
    /// Clipped fitted propensities.
    pub ehat: Vec<f64>,
    pub mu0_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
    /// Number of propensities moved by clipping.
    pub clipped: usize,
}

impl NuisanceFit {
    pub fn beta(&self, arm: u8) -> &DVector<f64> {
        if arm == 1 {
            &self.beta1_hat
        } else {
            &self.beta0_hat
        }
    }
}

fn fit_arm(data: &CompleteData, arm: u8) -> Result<(DVector<f64>, f64)> {
    let units: Vec<usize> = (0..data.n()).filter(|&i| data.treated(i) == (arm == 1)).collect();
    let k = data.p() + 1;
    let x = DMatrix::from_fn(units.len(), k, |r, c| if c == 0 { 1.0 } else { data.row(units[r])[c - 1] });
    let y = DVector::from_iterator(units.len(), units.iter().map(|&i| data.outcome()[i]));
    let beta = linalg::least_squares(&x, &y).map_err(|e| e.at_stage(format!("outcome regression, arm {arm}")))?;
    let rss = (&y - &x * &beta).norm_squared();
    let df = units.len().saturating_sub(k).max(1);
    Ok((beta, (rss / df as f64).sqrt()))
}

pub fn fit_nuisance(data: &CompleteData) -> Result<NuisanceFit> {
    fit_nuisance_with(data, &NuisanceOptions::default())
}

/// OLS per arm on `[1, X]` and a probit MLE for the propensity score.
pub fn fit_nuisance_with(data: &CompleteData, options: &NuisanceOptions) -> Result<NuisanceFit> {
    for arm in [0u8, 1] {
        if data.arm_size(arm) == 0 {
            return Err(Error::InvalidData(format!("treatment arm {arm} is empty")));
        }
    }
    let (beta0_hat, sigma0_hat) = fit_arm(data, 0)?;
    let (beta1_hat, sigma1_hat) = fit_arm(data, 1)?;
    let cols = options.propensity_columns.as_deref();
    let design = data.design(cols);
    let alpha_hat = probit::fit(&design, data.treatment())
        .map_err(|e| e.at_stage("propensity probit"))?
        .coef;
    let eta = &design * &alpha_hat;
    let mut clipped = 0;
    let ehat = eta
        .iter()
        .map(|&e| {
            let raw = normal::cdf(e);
            let c = clip_propensity(raw);
            if c != raw {
                clipped += 1;
            }
            c
        })
        .collect();
    if clipped > 0 {
        log::warn!("{clipped} fitted propensities clipped to [{PROPENSITY_CLIP}, {}]", 1.0 - PROPENSITY_CLIP);
    }
    let full = data.design(None);
    let mu0_hat = (&full * &beta0_hat).iter().copied().collect();
    let mu1_hat = (&full * &beta1_hat).iter().copied().collect();
    Ok(NuisanceFit {
        beta0_hat,
        beta1_hat,
        sigma0_hat,
        sigma1_hat,
        alpha_hat,
        propensity_columns: options.propensity_columns.clone(),
        ehat,
        mu0_hat,
        mu1_hat,
        clipped,
    })
}

/// Matching estimate `n⁻¹ Σ (2A−1)(Y_i − mean of matched Y)` on `points`.
pub fn matching_estimate(data: &CompleteData, points: &[f64], dim: usize, m: usize) -> Result<f64> {
    let treated: Vec<bool> = (0..data.n()).map(|i| data.treated(i)).collect();
    let matches = matching::nearest_neighbors(points, dim, &treated, m)?;
    let y = data.outcome();
    let total: f64 = (0..data.n())
        .map(|i| {
            let imputed = matches.of(i).iter().map(|&j| y[j]).sum::<f64>() / m as f64;
            let sign = if treated[i] { 1.0 } else { -1.0 };
            sign * (y[i] - imputed)
        })
        .sum();
    Ok(total / data.n() as f64)
}

/// Matching estimate with distance on the covariates.
pub fn tau_matching(data: &CompleteData, m: usize) -> Result<f64> {
    matching_estimate(data, data.covariates(), data.p(), m)
}

/// Point estimate `τ̂_n` of the requested kind.
pub fn tau_point(data: &CompleteData, fit: &NuisanceFit, kind: EstimatorKind) -> Result<f64> {
    let n = data.n() as f64;
    let a = data.treatment();
    let y = data.outcome();
    let e = &fit.ehat;
    let tau = match kind {
        EstimatorKind::Regression => fit.mu1_hat.iter().zip(&fit.mu0_hat).map(|(m1, m0)| m1 - m0).sum::<f64>() / n,
        EstimatorKind::Ipw => {
            (0..data.n())
                .map(|i| a[i] * y[i] / e[i] - (1.0 - a[i]) * y[i] / (1.0 - e[i]))
                .sum::<f64>()
                / n
        }
        EstimatorKind::Aipw => {
            (0..data.n())
                .map(|i| {
                    let (m1, m0) = (fit.mu1_hat[i], fit.mu0_hat[i]);
                    a[i] * y[i] / e[i] + (1.0 - a[i] / e[i]) * m1
                        - (1.0 - a[i]) * y[i] / (1.0 - e[i])
                        - (1.0 - (1.0 - a[i]) / (1.0 - e[i])) * m0
                })
                .sum::<f64>()
                / n
        }
        EstimatorKind::Matching { matches, on } => match on {
            MatchOn::Covariates => tau_matching(data, matches)?,
            MatchOn::PropensityScore => matching_estimate(data, &fit.ehat, 1, matches)?,
        },
    };
    Ok(tau)
}

/// `n⁻² Σ (ψ_i − ψ̄)²`, the influence-function variance of `τ̂_n`.
pub fn full_sample_variance(iv: &InfluenceVector) -> f64 {
    psi_variance(&iv.psi)
}

pub(crate) fn psi_variance(psi: &[f64]) -> f64 {
    let n = psi.len() as f64;
    let mean = psi.iter().sum::<f64>() / n;
    psi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n * n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_of_constant_psi_is_zero() {
        assert_eq!(psi_variance(&[3.0, 3.0, 3.0]), 0.0);
    }

    #[test]
    fn variance_of_two_points() {
        assert_eq!(psi_variance(&[0.0, 2.0]), 0.5);
    }

    #[test]
    fn two_unit_matching_by_hand() {
        let data = CompleteData::new(vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 1.0], 1);
        assert_eq!(tau_matching(&data, 1).unwrap(), 2.0);
    }
}
