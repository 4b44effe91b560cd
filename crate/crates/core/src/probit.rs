//! Probit log-likelihood, analytic score/Hessian and the Newton–Raphson MLE.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::normal;

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

/// Probit log-likelihood `Σ log Φ(q_i η_i)`, `q_i = 2y_i − 1`.
pub fn log_likelihood(design: &DMatrix<f64>, response: &[f64], coef: &DVector<f64>) -> f64 {
    let eta = design * coef;
    eta.iter()
        .zip(response)
        .map(|(&e, &y)| normal::log_cdf(if y > 0.5 { e } else { -e }))
        .sum()
}

/// Generalized residual `q φ(qη)/Φ(qη)`, the derivative of `log Φ(qη)` in `η`.
pub fn generalized_residual(eta: f64, y: f64) -> f64 {
    if y > 0.5 {
        normal::mills(eta)
    } else {
        -normal::mills(-eta)
    }
}

pub fn score(design: &DMatrix<f64>, response: &[f64], coef: &DVector<f64>) -> DVector<f64> {
    let eta = design * coef;
    let w = DVector::from_iterator(eta.len(), eta.iter().zip(response).map(|(&e, &y)| generalized_residual(e, y)));
    design.transpose() * w
}

/// Observed Hessian `−Σ λ_i(λ_i + η_i) x_i x_iᵀ`.
pub fn hessian(design: &DMatrix<f64>, response: &[f64], coef: &DVector<f64>) -> DMatrix<f64> {
    let eta = design * coef;
    let k = design.ncols();
    let mut h = DMatrix::zeros(k, k);
    for (i, (&e, &y)) in eta.iter().zip(response).enumerate() {
        let lam = generalized_residual(e, y);
        let w = lam * (lam + e);
        let row = design.row(i);
        h -= w * row.transpose() * row;
    }
    h
}

#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub coef: DVector<f64>,
    pub iterations: usize,
    pub score_norm: f64,
}

fn separated(design: &DMatrix<f64>, response: &[f64], coef: &DVector<f64>) -> bool {
    let eta = design * coef;
    eta.iter()
        .zip(response)
        .all(|(&e, &y)| normal::cdf(if y > 0.5 { e } else { -e }) > 1.0 - 1e-9)
}

/// Newton–Raphson with step halving, stopping when `‖score‖∞ < 1e-8`.
pub fn fit(design: &DMatrix<f64>, response: &[f64]) -> Result<ProbitFit> {
    let k = design.ncols();
    linalg::check_gram(&(design.transpose() * design))?;
    let mut coef = DVector::zeros(k);
    let mut ll = log_likelihood(design, response, &coef);
    let mut trace = Vec::new();
    for iteration in 0..MAX_ITERATIONS {
        let s = score(design, response, &coef);
        let norm = s.amax();
        trace.push(norm);
        if norm < SCORE_TOLERANCE {
            if separated(design, response, &coef) {
                break;
            }
            return Ok(ProbitFit {
                coef,
                iterations: iteration,
                score_norm: norm,
            });
        }
        let neg_h = -hessian(design, response, &coef);
        let step = match linalg::cholesky(&neg_h, "probit Hessian") {
            Ok(ch) => ch.solve(&s),
            Err(_) => break,
        };
        let mut t = 1.0;
        loop {
            let candidate = &coef + &step * t;
            let cand_ll = log_likelihood(design, response, &candidate);
            if cand_ll >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                coef = candidate;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
        if coef.amax() > 1e8 {
            break;
        }
    }
    Err(Error::ProbitNonConvergence {
        iterations: trace.len(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut r = rng::stream(seed, &[]);
        let x = DMatrix::from_fn(n, 3, |_, c| if c == 0 { 1.0 } else { normal::draw(&mut r) });
        let y = (0..n)
            .map(|i| {
                let eta = -0.2 + 0.3 * x[(i, 1)] + 0.4 * x[(i, 2)];
                if r.random::<f64>() < normal::cdf(eta) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn newton_reaches_score_tolerance() {
        let (x, y) = toy(2000, 5);
        let fit = fit(&x, &y).unwrap();
        assert!(score(&x, &y, &fit.coef).amax() < SCORE_TOLERANCE);
        assert!((fit.coef[1] - 0.3).abs() < 0.15);
    }

    #[test]
    fn separated_data_fails_to_converge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
        let y = vec![0.0, 0.0, 1.0, 1.0];
        assert!(matches!(fit(&x, &y), Err(Error::ProbitNonConvergence { .. })));
    }
}
