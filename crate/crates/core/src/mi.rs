//! Full-sample estimation on each imputed dataset and Rubin's combining
//! rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{EstimatorKind, ImputedDataset};
use crate::error::{Error, Result};
use crate::estimators::{self, NuisanceOptions};
use crate::normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIResult {
    pub tau_mi: f64,
    /// Within-imputation variance.
    pub w_m: f64,
    /// Between-imputation variance.
    pub b_m: f64,
    pub v_mi: f64,
    /// Degrees of freedom; infinite when `b_m = 0`.
    pub nu: f64,
    /// `(τ̂⁽ʲ⁾, V̂⁽ʲ⁾)` per imputation.
    pub per_imputation: Vec<(f64, f64)>,
    pub kind: EstimatorKind,
    pub m: usize,
}

impl MIResult {
    /// Fraction of missing information `λ`.
    pub fn lambda(&self) -> f64 {
        let between = (1.0 + 1.0 / self.m as f64) * self.b_m;
        if between == 0.0 {
            0.0
        } else {
            between / (self.w_m + between)
        }
    }
}

/// Apply Rubin's rule to per-imputation estimates and variances.
pub fn combine(per_imputation: Vec<(f64, f64)>, kind: EstimatorKind) -> Result<MIResult> {
    let m = per_imputation.len();
    if m < 2 {
        return Err(Error::Config(format!("Rubin's rule needs at least 2 imputations, got {m}")));
    }
    let mf = m as f64;
    // Averaging offsets from the first estimate keeps identical imputations exact.
    let first = per_imputation[0].0;
    let tau_mi = first + per_imputation.iter().map(|(t, _)| t - first).sum::<f64>() / mf;
    let w_m = per_imputation.iter().map(|(_, v)| v).sum::<f64>() / mf;
    let b_m = per_imputation.iter().map(|(t, _)| (t - tau_mi).powi(2)).sum::<f64>() / (mf - 1.0);
    let v_mi = w_m + (1.0 + 1.0 / mf) * b_m;
    let mut res = MIResult {
        tau_mi,
        w_m,
        b_m,
        v_mi,
        nu: f64::INFINITY,
        per_imputation,
        kind,
        m,
    };
    let lambda = res.lambda();
    if lambda > 0.0 {
        res.nu = (mf - 1.0) / (lambda * lambda);
    }
    Ok(res)
}

/// `(τ̂⁽ʲ⁾, V̂⁽ʲ⁾)` on one completed dataset for several kinds, sharing the
/// nuisance fit.
pub fn estimate_kinds(
    data: &crate::data::CompleteData,
    kinds: &[EstimatorKind],
    options: &NuisanceOptions,
) -> Result<Vec<(f64, f64)>> {
    let fit = estimators::fit_nuisance_with(data, options)?;
    kinds
        .iter()
        .map(|&kind| {
            let iv = estimators::influence(data, &fit, kind)?;
            Ok((iv.tau_hat, estimators::full_sample_variance(&iv)))
        })
        .collect()
}

/// Rubin-combined estimates for each kind.
pub fn mi_estimate_kinds(
    imputed: &[ImputedDataset],
    kinds: &[EstimatorKind],
    options: &NuisanceOptions,
) -> Result<Vec<MIResult>> {
    let per: Vec<Vec<(f64, f64)>> = imputed
        .par_iter()
        .map(|imp| estimate_kinds(&imp.data, kinds, options).map_err(|e| e.at_stage(format!("imputation {}", imp.index))))
        .collect::<Result<_>>()?;
    kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| combine(per.iter().map(|row| row[k]).collect(), kind))
        .collect()
}

pub fn mi_estimate(imputed: &[ImputedDataset], kind: EstimatorKind) -> Result<MIResult> {
    Ok(mi_estimate_kinds(imputed, &[kind], &NuisanceOptions::default())?.remove(0))
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(level))
    }
}

/// Upper `(1+level)/2` quantile of `t_ν`, normal when `ν` is infinite.
pub fn t_quantile(nu: f64, level: f64) -> f64 {
    let q = 0.5 * (1.0 + level);
    if !nu.is_finite() || nu > 1e8 {
        normal::quantile(q)
    } else {
        StudentsT::new(0.0, 1.0, nu).expect("positive degrees of freedom").inverse_cdf(q)
    }
}

/// `τ̂_MI ± t_{ν,(1+level)/2} √V_MI`.
pub fn rubin_ci(res: &MIResult, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let half = t_quantile(res.nu, level) * res.v_mi.max(0.0).sqrt();
    Ok((res.tau_mi - half, res.tau_mi + half))
}
