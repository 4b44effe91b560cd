//! Log causal risk ratio and log causal odds ratio for binary outcomes,
//! linearized by the delta method on the arm-mean influence terms.

use super::{influence, psi_variance, NuisanceFit};
use crate::data::{CompleteData, EstimatorKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    LogCrr,
    LogCor,
}

#[derive(Debug, Clone)]
pub struct RatioEstimate {
    pub point: f64,
    /// Linearized per-unit influence values; their mean is `point`.
    pub influence: Vec<f64>,
    pub variance: f64,
    pub arm_means: [f64; 2],
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Point estimate and delta-method influence values from arm means `m1`, `m0`
/// and centered arm influence terms.
pub(crate) fn linearize(which: RatioKind, m1: f64, m0: f64, arm1: &[f64], arm0: &[f64]) -> Result<RatioEstimate> {
    for (arm, m) in [(1, m1), (0, m0)] {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::BoundaryEstimate(format!("Ê{{Y({arm})}} = {m} outside (0, 1)")));
        }
    }
    let (point, g1, g0) = match which {
        RatioKind::LogCrr => ((m1 / m0).ln(), 1.0 / m1, 1.0 / m0),
        RatioKind::LogCor => (logit(m1) - logit(m0), 1.0 / (m1 * (1.0 - m1)), 1.0 / (m0 * (1.0 - m0))),
    };
    let influence: Vec<f64> = arm1
        .iter()
        .zip(arm0)
        .map(|(p1, p0)| point + g1 * (p1 - m1) - g0 * (p0 - m0))
        .collect();
    let variance = psi_variance(&influence);
    Ok(RatioEstimate {
        point,
        influence,
        variance,
        arm_means: [m0, m1],
    })
}

pub fn ratio_estimand(
    data: &CompleteData,
    fit: &NuisanceFit,
    kind: EstimatorKind,
    which: RatioKind,
) -> Result<RatioEstimate> {
    if data.outcome().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidData("ratio estimands need a binary outcome".into()));
    }
    let iv = influence(data, fit, kind)?;
    let n = data.n() as f64;
    let m1 = iv.arm1.iter().sum::<f64>() / n;
    let m0 = iv.arm0.iter().sum::<f64>() / n;
    linearize(which, m1, m0, &iv.arm1, &iv.arm0)
}
