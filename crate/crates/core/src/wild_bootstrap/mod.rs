//! Wild bootstrap for MI estimators built on the martingale representation
//! `τ̂_MI − τ ≈ n^{-1/2} Σ_k ξ_k` over `n` observed-data terms and `nm`
//! imputation terms.

pub mod arrays;
pub mod information;
pub mod weights;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use arrays::{
    arrays_from_summary, build_arrays, conditional_summary, frozen_functionals, gamma_hat, stack, ConditionalSummary,
    MartingaleArrays,
};
pub use information::{mean_score, obs_information_chain, obs_information_jacobian};
pub use weights::{draw_weights, WeightScheme};

use crate::error::Result;
use crate::mi::check_level;
use crate::{normal, rng};

const WEIGHT_STREAM: u64 = 0x7765_6967;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub v_bs: f64,
    pub replicates: Vec<f64>,
}

/// `T*_b = n^{-1/2} Σ_k ξ̂_k u_k^{(b)}` for several arrays of equal shape,
/// all sharing the same weight draws.
pub fn bootstrap_many(arrays: &[&MartingaleArrays], scheme: WeightScheme, b: usize, seed: u64) -> Vec<BootstrapResult> {
    assert!(b >= 2, "need at least two bootstrap replicates");
    let Some(first) = arrays.first() else {
        return Vec::new();
    };
    let len = first.len();
    assert!(arrays.iter().all(|a| a.len() == len), "arrays must share n and m");
    let root = (first.n as f64).sqrt();
    let xis: Vec<Vec<f64>> = arrays.iter().map(|a| a.xi().collect()).collect();
    let per_b: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map_init(
            || vec![0.0; len],
            |u, rep| {
                let mut r = rng::stream(seed, &[WEIGHT_STREAM, rep as u64]);
                weights::fill_weights(scheme, &mut r, u);
                xis.iter()
                    .map(|xi| xi.iter().zip(u.iter()).map(|(x, w)| x * w).sum::<f64>() / root)
                    .collect()
            },
        )
        .collect();
    (0..arrays.len())
        .map(|k| {
            let replicates: Vec<f64> = per_b.iter().map(|row| row[k]).collect();
            let v_bs = sample_variance(&replicates);
            if v_bs == 0.0 {
                log::warn!("bootstrap replicates are constant; V_BS = 0");
            }
            BootstrapResult { v_bs, replicates }
        })
        .collect()
}

pub fn bootstrap(arrays: &MartingaleArrays, scheme: WeightScheme, b: usize, seed: u64) -> BootstrapResult {
    bootstrap_many(&[arrays], scheme, b, seed).remove(0)
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiStyle {
    Quantile,
    Wald,
}

/// Linear-interpolation sample quantile (type 7).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile interval `(τ̂ − q*_{1−α/2}, τ̂ − q*_{α/2})` or Wald interval
/// `τ̂ ± z_{1−α/2} √V_BS`. `level = 0` gives the zero-width limit.
pub fn bootstrap_ci(tau_mi: f64, replicates: &[f64], v_bs: f64, level: f64, style: CiStyle) -> Result<(f64, f64)> {
    if level != 0.0 {
        check_level(level)?;
    }
    let alpha = 1.0 - level;
    match style {
        CiStyle::Quantile => {
            if replicates.is_empty() {
                return Err(crate::Error::Config("quantile interval needs replicates".into()));
            }
            let mut sorted = replicates.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let upper = empirical_quantile(&sorted, 1.0 - alpha / 2.0);
            let lower = empirical_quantile(&sorted, alpha / 2.0);
            Ok((tau_mi - upper, tau_mi - lower))
        }
        CiStyle::Wald => {
            let z = normal::quantile(1.0 - alpha / 2.0);
            let half = z * v_bs.max(0.0).sqrt();
            Ok((tau_mi - half, tau_mi + half))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EstimatorKind;
    use nalgebra::{DMatrix, DVector};

    fn arrays(xi_obs: Vec<f64>, xi_imp: Vec<f64>, m: usize) -> MartingaleArrays {
        let n = xi_obs.len();
        MartingaleArrays {
            kind: EstimatorKind::Regression,
            n,
            m,
            xi_obs,
            xi_imp,
            gamma_hat: DVector::zeros(1),
            i_obs_inv: DMatrix::identity(1, 1),
            mean_scores: DMatrix::zeros(n, 1),
            cond_psi: vec![0.0; n],
            tau_hat: 0.0,
            draws: 1,
        }
    }

    #[test]
    fn zero_arrays_give_zero_replicates() {
        let a = arrays(vec![0.0; 5], vec![0.0; 10], 2);
        let res = bootstrap(&a, WeightScheme::Mammen, 20, 1);
        assert!(res.replicates.iter().all(|&t| t == 0.0));
        assert_eq!(res.v_bs, 0.0);
    }

    #[test]
    fn sign_flip_leaves_variance_unchanged() {
        let a = arrays(vec![0.3, -0.1, 0.2], vec![0.05, -0.02, 0.0, 0.01, 0.04, -0.03], 2);
        let mut neg = a.clone();
        neg.xi_obs.iter_mut().for_each(|v| *v = -*v);
        neg.xi_imp.iter_mut().for_each(|v| *v = -*v);
        for scheme in [WeightScheme::Mammen, WeightScheme::Normal, WeightScheme::Multinomial] {
            let r = bootstrap_many(&[&a, &neg], scheme, 50, 4);
            assert!((r[0].v_bs - r[1].v_bs).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_level_intervals_are_points() {
        let reps = [-1.0, 1.0];
        for style in [CiStyle::Quantile, CiStyle::Wald] {
            let (lo, hi) = bootstrap_ci(0.7, &reps, 2.0, 0.0, style).unwrap();
            assert!((lo - 0.7).abs() < 1e-12 && (hi - 0.7).abs() < 1e-12);
        }
        assert!(bootstrap_ci(0.0, &reps, 1.0, 1.0, CiStyle::Wald).is_err());
    }

    #[test]
    fn quantile_interval_reflects_replicates() {
        let reps: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let (lo, hi) = bootstrap_ci(0.0, &reps, 0.0, 0.9, CiStyle::Quantile).unwrap();
        assert!((lo + 0.95).abs() < 1e-12);
        assert!((hi + 0.05).abs() < 1e-12);
    }
}
