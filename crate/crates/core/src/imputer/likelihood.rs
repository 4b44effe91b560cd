//! Complete-data log-likelihood and score of one unit under the joint
//! model, in the [`ThetaLayout`] parametrization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::layout::ThetaLayout;
use super::spec::JointModelSpec;
use crate::data::ThetaParams;
use crate::error::Result;
use crate::{linalg, normal, probit};

/// One fully completed unit together with its missingness indicators.
#[derive(Debug, Clone, Copy)]
pub struct UnitValues<'a> {
    pub a: f64,
    pub x: &'a [f64],
    pub y: f64,
    pub r_x: &'a [bool],
    pub r_y: bool,
}

/// `θ` with the derived quantities needed for per-unit evaluation.
#[derive(Debug, Clone)]
pub struct ScoreContext {
    pub layout: ThetaLayout,
    spec: JointModelSpec,
    theta: ThetaParams,
    sigma_inv: DMatrix<f64>,
    log_det_sigma: f64,
}

impl ScoreContext {
    pub fn new(spec: &JointModelSpec, theta: &ThetaParams) -> Result<Self> {
        let chol = linalg::cholesky(&theta.sigma_x, "covariate covariance")?;
        let log_det_sigma = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(ScoreContext {
            layout: ThetaLayout::new(spec),
            spec: spec.clone(),
            theta: theta.clone(),
            sigma_inv: linalg::symmetrize(&chol.inverse()),
            log_det_sigma,
        })
    }

    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn lin(coef: &DVector<f64>, x: &[f64]) -> f64 {
        coef[0] + x.iter().zip(coef.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn log_likelihood(&self, u: UnitValues) -> f64 {
        let th = &self.theta;
        let p = self.layout.p();
        let arm = (u.a > 0.5) as u8;
        let s2 = th.sigma(arm).powi(2);
        let resid = u.y - Self::lin(th.beta(arm), u.x);
        let mut ll = -0.5 * (2.0 * PI * s2).ln() - 0.5 * resid * resid / s2;
        let q = if arm == 1 { 1.0 } else { -1.0 };
        ll += normal::log_cdf(q * Self::lin(&th.alpha, u.x));
        let d = DVector::from_fn(p, |j, _| u.x[j] - th.mu_x[j]);
        let quad = (d.transpose() * &self.sigma_inv * &d)[0];
        ll += -0.5 * (p as f64 * (2.0 * PI).ln() + self.log_det_sigma + quad);
        let mut w = Vec::new();
        for ((j, model), g) in self.spec.active_covariate_models().iter().zip(&th.gamma_x) {
            w.resize(model.len(), 0.0);
            model.row(u.a, u.x, u.y, &mut w);
            let eta: f64 = w.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            ll += normal::log_cdf(if u.r_x[*j] { eta } else { -eta });
        }
        if let (Some(model), Some(g)) = (self.spec.active_outcome_model(), &th.gamma_y) {
            w.resize(model.len(), 0.0);
            model.row(u.a, u.x, u.y, &mut w);
            let eta: f64 = w.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            ll += normal::log_cdf(if u.r_y { eta } else { -eta });
        }
        ll
    }

    /// Writes `∂ℓ/∂θ` into `out` (length [`ThetaLayout::dim`]).
    pub fn score(&self, u: UnitValues, out: &mut [f64]) {
        let th = &self.theta;
        let layout = &self.layout;
        let p = layout.p();
        out.fill(0.0);

        let arm = (u.a > 0.5) as u8;
        let s2 = th.sigma(arm).powi(2);
        let resid = u.y - Self::lin(th.beta(arm), u.x);
        let b = layout.beta(arm).start;
        out[b] = resid / s2;
        for j in 0..p {
            out[b + 1 + j] = u.x[j] * resid / s2;
        }
        out[layout.variance(arm)] = -0.5 / s2 + 0.5 * resid * resid / (s2 * s2);

        let lam = probit::generalized_residual(Self::lin(&th.alpha, u.x), u.a);
        let a0 = layout.alpha().start;
        out[a0] = lam;
        for j in 0..p {
            out[a0 + 1 + j] = lam * u.x[j];
        }

        let d = DVector::from_fn(p, |j, _| u.x[j] - th.mu_x[j]);
        let sd = &self.sigma_inv * &d;
        let m0 = layout.mu().start;
        for j in 0..p {
            out[m0 + j] = sd[j];
        }
        let g = (&sd * sd.transpose() - &self.sigma_inv) * 0.5;
        for (idx, (r, c)) in layout.vech().zip(layout.vech_pairs()) {
            out[idx] = if r == c { g[(r, c)] } else { 2.0 * g[(r, c)] };
        }

        let mut w = Vec::new();
        for (model_idx, ((j, model), gamma)) in self.spec.active_covariate_models().iter().zip(&th.gamma_x).enumerate()
        {
            w.resize(model.len(), 0.0);
            model.row(u.a, u.x, u.y, &mut w);
            let eta: f64 = w.iter().zip(gamma.iter()).map(|(a, b)| a * b).sum();
            let lam = probit::generalized_residual(eta, if u.r_x[*j] { 1.0 } else { 0.0 });
            for (o, wk) in out[layout.gamma_x(model_idx)].iter_mut().zip(&w) {
                *o = lam * wk;
            }
        }
        if let (Some(model), Some(gamma), Some(range)) =
            (self.spec.active_outcome_model(), &th.gamma_y, layout.gamma_y())
        {
            w.resize(model.len(), 0.0);
            model.row(u.a, u.x, u.y, &mut w);
            let eta: f64 = w.iter().zip(gamma.iter()).map(|(a, b)| a * b).sum();
            let lam = probit::generalized_residual(eta, if u.r_y { 1.0 } else { 0.0 });
            for (o, wk) in out[range].iter_mut().zip(&w) {
                *o = lam * wk;
            }
        }
    }
}
