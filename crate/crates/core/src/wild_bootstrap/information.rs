use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{ObservedDataset, ThetaParams};
use crate::error::{Error, Result};
use crate::imputer::{predictive_conditional, ConditionalSampler, GibbsChain, JointModelSpec, ScoreContext, ThetaLayout, UnitValues};
use crate::{linalg, rng};

const JACOBIAN_STREAM: u64 = 0x6a61_636f;

/// Monte Carlo mean score `E{S(θ; Z) | Z_obs,i, θ}` of unit `i`; exact
/// when the unit is fully observed.
pub fn mean_score<R: Rng + ?Sized>(
    data: &ObservedDataset,
    i: usize,
    theta: &ThetaParams,
    spec: &JointModelSpec,
    draws: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let ctx = ScoreContext::new(spec, theta)?;
    let d = ctx.dim();
    let mut s = vec![0.0; d];
    let mut total = DVector::zeros(d);
    let r_x = data.mask_row(i);
    let r_y = data.outcome_observed(i);
    if data.unit_complete(i) {
        let x: Vec<f64> = data.covariate_row(i).iter().map(|v| v.expect("complete unit")).collect();
        let y = data.outcome(i).expect("complete unit");
        ctx.score(UnitValues { a: data.treatment(i) as f64, x: &x, y, r_x, r_y }, &mut s);
        return Ok(DVector::from_vec(s));
    }
    let completions = predictive_conditional(data, i, theta, spec, draws, rng)?;
    for (x, y) in &completions {
        ctx.score(UnitValues { a: data.treatment(i) as f64, x, y: *y, r_x, r_y }, &mut s);
        total += DVector::from_column_slice(&s);
    }
    Ok(total / draws as f64)
}

fn check_spd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = linalg::symmetrize(&m);
    let ev = linalg::eigenvalues(&m);
    if ev.iter().all(|&e| e > 0.0 && e.is_finite()) {
        Ok(m)
    } else {
        Err(Error::InformationNotPositiveDefinite { eigenvalues: ev })
    }
}

/// `n ×` the covariance of the retained chain: the inverse per-unit
/// observed information.
pub fn obs_information_chain(chain: &GibbsChain, n: usize) -> Result<DMatrix<f64>> {
    check_spd(chain.posterior_covariance() * n as f64)
}

/// Inverse per-unit observed information from a central-difference
/// Jacobian of the averaged mean score. Completions are drawn once at `θ`
/// and reweighted by complete-data likelihood ratios under perturbation,
/// so every evaluation uses the same random numbers.
pub fn obs_information_jacobian(
    data: &ObservedDataset,
    theta: &ThetaParams,
    spec: &JointModelSpec,
    draws: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let layout = ThetaLayout::new(spec);
    let d = layout.dim();
    let n = data.n();
    let p = data.p();
    let sampler = ConditionalSampler::new(spec, theta, data)?;
    let incomplete: Vec<usize> = (0..n).filter(|&i| !data.unit_complete(i)).collect();
    let mut r = rng::stream(seed, &[JACOBIAN_STREAM]);
    let mut completions: Vec<Vec<(Vec<f64>, f64)>> = Vec::with_capacity(incomplete.len());
    for &i in &incomplete {
        completions.push(
            (0..draws)
                .map(|_| {
                    let mut x = vec![0.0; p];
                    let y = sampler.draw_row(data, i, &mut r, &mut x);
                    (x, y)
                })
                .collect(),
        );
    }
    let base_ctx = ScoreContext::new(spec, theta)?;
    let base_ll: Vec<Vec<f64>> = incomplete
        .iter()
        .zip(&completions)
        .map(|(&i, comp)| {
            comp.iter()
                .map(|(x, y)| base_ctx.log_likelihood(unit(data, i, x, *y)))
                .collect()
        })
        .collect();
    let observed_rows: Vec<(usize, Vec<f64>, f64)> = (0..n)
        .filter(|&i| data.unit_complete(i))
        .map(|i| {
            let x = data.covariate_row(i).iter().map(|v| v.expect("complete unit")).collect();
            (i, x, data.outcome(i).expect("complete unit"))
        })
        .collect();

    let averaged = |th: &ThetaParams| -> Result<DVector<f64>> {
        let ctx = ScoreContext::new(spec, th)?;
        let mut total = DVector::zeros(d);
        let mut s = vec![0.0; d];
        for (i, x, y) in &observed_rows {
            ctx.score(unit(data, *i, x, *y), &mut s);
            total += DVector::from_column_slice(&s);
        }
        for ((&i, comp), ll0) in incomplete.iter().zip(&completions).zip(&base_ll) {
            let logw: Vec<f64> = comp
                .iter()
                .zip(ll0)
                .map(|((x, y), l0)| ctx.log_likelihood(unit(data, i, x, *y)) - l0)
                .collect();
            let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
            let wsum: f64 = w.iter().sum();
            let mut acc = DVector::zeros(d);
            for ((x, y), wl) in comp.iter().zip(&w) {
                ctx.score(unit(data, i, x, *y), &mut s);
                acc += DVector::from_column_slice(&s) * *wl;
            }
            total += acc / wsum;
        }
        Ok(total / n as f64)
    };

    let base = layout.flatten(theta);
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let h = 1e-5 * (1.0 + base[k].abs());
        let mut plus = base.clone();
        plus[k] += h;
        let mut minus = base.clone();
        minus[k] -= h;
        let fp = averaged(&layout.unflatten(plus.as_slice()))?;
        let fm = averaged(&layout.unflatten(minus.as_slice()))?;
        jac.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    let info = check_spd(-jac)?;
    let inv = info
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InformationNotPositiveDefinite { eigenvalues: linalg::eigenvalues(&info) })?
        .inverse();
    Ok(linalg::symmetrize(&inv))
}

fn unit<'a>(data: &'a ObservedDataset, i: usize, x: &'a [f64], y: f64) -> UnitValues<'a> {
    UnitValues {
        a: data.treatment(i) as f64,
        x,
        y,
        r_x: data.mask_row(i),
        r_y: data.outcome_observed(i),
    }
}
