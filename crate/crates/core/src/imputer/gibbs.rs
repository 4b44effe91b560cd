use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::conditional::ConditionalSampler;
use super::layout::ThetaLayout;
use super::spec::{GibbsConfig, JointModelSpec, MissingnessModel, PriorSpec, Selection};
use super::wishart;
use crate::data::{validate, CompleteData, ImputedDataset, ObservedDataset, ThetaParams};
use crate::error::{Error, Result};
use crate::{linalg, normal, rng};

const CHAIN_STREAM: u64 = 0x6769_6262;
const SELECT_STREAM: u64 = 0x7365_6c65;
const IMPUTE_STREAM: u64 = 0x696d_7075;
const DIVERGENCE: f64 = 1e6;

/// Output of [`gibbs_run`].
#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub spec: JointModelSpec,
    pub layout: ThetaLayout,
    pub burn_in: usize,
    /// Flattened `θ` at every iteration, burn-in included.
    pub trace: Vec<Vec<f64>>,
    pub retained: Vec<ThetaParams>,
    /// Missing covariate cells (row-major) followed by missing outcomes,
    /// one vector per retained iteration.
    pub missing_states: Vec<Vec<f64>>,
}

impl GibbsChain {
    pub fn retained_matrix(&self) -> DMatrix<f64> {
        let rows = &self.trace[self.burn_in..];
        DMatrix::from_fn(rows.len(), self.layout.dim(), |r, c| rows[r][c])
    }

    pub fn posterior_mean_vector(&self) -> DVector<f64> {
        let m = self.retained_matrix();
        DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()))
    }

    pub fn posterior_mean(&self) -> ThetaParams {
        self.layout.unflatten(self.posterior_mean_vector().as_slice())
    }

    pub fn posterior_covariance(&self) -> DMatrix<f64> {
        let m = self.retained_matrix();
        let mean = self.posterior_mean_vector();
        let centered = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] - mean[c]);
        let denom = (m.nrows().max(2) - 1) as f64;
        linalg::symmetrize(&(centered.transpose() * centered / denom))
    }

    pub fn posterior_sd(&self) -> DVector<f64> {
        self.posterior_covariance().diagonal().map(f64::sqrt)
    }
}

/// Design rows `[1, x]` of the current completion.
fn augmented(xs: &[f64], p: usize) -> Vec<f64> {
    let n = xs.len() / p.max(1);
    let k = p + 1;
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        out[i * k] = 1.0;
        out[i * k + 1..(i + 1) * k].copy_from_slice(&xs[i * p..(i + 1) * p]);
    }
    out
}

fn cross_products<'a>(rows: impl Iterator<Item = (&'a [f64], f64)>, k: usize) -> (DMatrix<f64>, DVector<f64>, usize) {
    let mut xtx = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    let mut count = 0;
    for (x, y) in rows {
        for r in 0..k {
            xty[r] += x[r] * y;
            for c in 0..=r {
                xtx[(r, c)] += x[r] * x[c];
            }
        }
        count += 1;
    }
    for r in 0..k {
        for c in 0..r {
            xtx[(c, r)] = xtx[(r, c)];
        }
    }
    (xtx, xty, count)
}

/// Draw from the normal posterior of coefficients with precision
/// `scale·XᵀX + I/v` and mean `P⁻¹·scale·Xᵀy`.
fn draw_coefficients<R: Rng + ?Sized>(
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    scale: f64,
    prior_variance: f64,
    iteration: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let k = xtx.nrows();
    let prec = xtx * scale + DMatrix::identity(k, k) / prior_variance;
    let chol = linalg::cholesky(&prec, "coefficient posterior precision").map_err(|e| with_iteration(e, iteration))?;
    let mean = chol.solve(&(xty * scale));
    Ok(linalg::draw_from_precision(&mean, &chol, rng))
}

fn with_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NotPositiveDefinite { context, .. } => Error::NotPositiveDefinite {
            context,
            iteration: Some(iteration),
        },
        other => other,
    }
}

struct State {
    xs: Vec<f64>,
    ys: Vec<f64>,
    theta: ThetaParams,
}

fn initial_state(data: &ObservedDataset, spec: &JointModelSpec, prior: &PriorSpec) -> State {
    let (n, p) = (data.n(), data.p());
    let mut xs = vec![0.0; n * p];
    let mut col_mean = vec![0.0; p];
    let mut col_var = vec![1.0; p];
    for j in 0..p {
        let vals: Vec<f64> = (0..n).filter_map(|i| data.covariate(i, j)).collect();
        if !vals.is_empty() {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            col_mean[j] = m;
            if vals.len() > 1 {
                let v = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
                col_var[j] = if v > 1e-8 { v } else { 1.0 };
            }
        }
        for i in 0..n {
            xs[i * p + j] = data.covariate(i, j).unwrap_or(col_mean[j]);
        }
    }
    let mut ys = vec![0.0; n];
    let mut arm_mean = [0.0; 2];
    for arm in 0..2u8 {
        let vals: Vec<f64> = (0..n).filter(|&i| data.treatment(i) == arm).filter_map(|i| data.outcome(i)).collect();
        if !vals.is_empty() {
            arm_mean[arm as usize] = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }
    for i in 0..n {
        ys[i] = data.outcome(i).unwrap_or(arm_mean[data.treatment(i) as usize]);
    }
    let k = p + 1;
    let design = augmented(&xs, p);
    let mut beta = [DVector::zeros(k), DVector::zeros(k)];
    let mut sigma = [1.0; 2];
    for arm in 0..2u8 {
        let rows = (0..n)
            .filter(|&i| data.treatment(i) == arm && data.outcome_observed(i))
            .map(|i| (&design[i * k..(i + 1) * k], ys[i]));
        let (xtx, xty, count) = cross_products(rows, k);
        let prec = xtx + DMatrix::identity(k, k) / prior.coef_variance;
        if let Some(chol) = prec.cholesky() {
            beta[arm as usize] = chol.solve(&xty);
        }
        let rss: f64 = (0..n)
            .filter(|&i| data.treatment(i) == arm && data.outcome_observed(i))
            .map(|i| {
                let fit: f64 = design[i * k..(i + 1) * k].iter().zip(beta[arm as usize].iter()).map(|(a, b)| a * b).sum();
                (ys[i] - fit).powi(2)
            })
            .sum();
        if count > k {
            sigma[arm as usize] = (rss / (count - k) as f64).sqrt().max(1e-3);
        }
    }
    let [beta0, beta1] = beta;
    let theta = ThetaParams {
        beta0,
        beta1,
        sigma0: sigma[0],
        sigma1: sigma[1],
        alpha: DVector::zeros(k),
        mu_x: DVector::from_vec(col_mean),
        sigma_x: DMatrix::from_diagonal(&DVector::from_vec(col_var)),
        gamma_x: spec.active_covariate_models().iter().map(|(_, m)| DVector::zeros(m.len())).collect(),
        gamma_y: spec.active_outcome_model().map(|m| DVector::zeros(m.len())),
    };
    State { xs, ys, theta }
}

fn probit_update<R: Rng + ?Sized>(
    rows: &[f64],
    k: usize,
    responses: impl Iterator<Item = bool>,
    coef: &DVector<f64>,
    prior_variance: f64,
    iteration: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let latents: Vec<f64> = rows
        .chunks_exact(k)
        .zip(responses)
        .map(|(w, r)| {
            let eta: f64 = w.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
            normal::draw_truncated(eta, r, rng)
        })
        .collect();
    let (xtx, xty, _) = cross_products(rows.chunks_exact(k).zip(latents.iter().copied()), k);
    draw_coefficients(&xtx, &xty, 1.0, prior_variance, iteration, rng)
}

fn model_rows(model: &MissingnessModel, data: &ObservedDataset, xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let (n, p, k) = (data.n(), data.p(), model.len());
    let mut rows = vec![0.0; n * k];
    for i in 0..n {
        model.row(data.treatment(i) as f64, &xs[i * p..(i + 1) * p], ys[i], &mut rows[i * k..(i + 1) * k]);
    }
    rows
}

/// Data-augmentation Gibbs sampler for the joint model.
pub fn gibbs_run(
    data: &ObservedDataset,
    spec: &JointModelSpec,
    prior: &PriorSpec,
    cfg: &GibbsConfig,
) -> Result<GibbsChain> {
    let report = validate(data);
    if !report.is_ok() {
        return Err(Error::InvalidData(report.messages().join("; ")));
    }
    spec.check(data)?;
    prior.check(data.p())?;
    cfg.check()?;

    let (n, p) = (data.n(), data.p());
    let k = p + 1;
    let layout = ThetaLayout::new(spec);
    let mut rng = rng::stream(cfg.seed, &[CHAIN_STREAM]);
    let State { mut xs, mut ys, mut theta } = initial_state(data, spec, prior);
    let incomplete: Vec<usize> = (0..n)
        .filter(|&i| !data.unit_complete(i) || !data.outcome_observed(i))
        .collect();

    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut retained = Vec::with_capacity(cfg.retained());
    let mut missing_states = Vec::with_capacity(cfg.retained());

    for iteration in 0..cfg.iterations {
        let design = augmented(&xs, p);

        // outcome regressions, using units with observed outcome
        for arm in 0..2u8 {
            let units = || (0..n).filter(move |&i| data.treatment(i) == arm && data.outcome_observed(i));
            let (xtx, xty, count) = cross_products(units().map(|i| (&design[i * k..(i + 1) * k], ys[i])), k);
            let precision = 1.0 / theta.sigma(arm).powi(2);
            let beta = draw_coefficients(&xtx, &xty, precision, prior.coef_variance, iteration, &mut rng)?;
            let rss: f64 = units()
                .map(|i| {
                    let fit: f64 = design[i * k..(i + 1) * k].iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
                    (ys[i] - fit).powi(2)
                })
                .sum();
            let shape = prior.precision_shape + 0.5 * count as f64;
            let rate = prior.precision_rate + 0.5 * rss;
            let tau = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(&mut rng);
            let sd = 1.0 / tau.sqrt();
            if arm == 1 {
                theta.beta1 = beta;
                theta.sigma1 = sd;
            } else {
                theta.beta0 = beta;
                theta.sigma0 = sd;
            }
        }

        // treatment probit
        theta.alpha = probit_update(
            &design,
            k,
            (0..n).map(|i| data.treatment(i) == 1),
            &theta.alpha,
            prior.coef_variance,
            iteration,
            &mut rng,
        )?;

        // missingness probits
        for (idx, (j, model)) in spec.active_covariate_models().iter().enumerate() {
            let rows = model_rows(model, data, &xs, &ys);
            theta.gamma_x[idx] = probit_update(
                &rows,
                model.len(),
                (0..n).map(|i| data.is_observed(i, *j)),
                &theta.gamma_x[idx],
                prior.coef_variance,
                iteration,
                &mut rng,
            )?;
        }
        if let Some(model) = spec.active_outcome_model() {
            let rows = model_rows(model, data, &xs, &ys);
            let current = theta.gamma_y.clone().expect("outcome model coefficients");
            theta.gamma_y = Some(probit_update(
                &rows,
                model.len(),
                (0..n).map(|i| data.outcome_observed(i)),
                &current,
                prior.coef_variance,
                iteration,
                &mut rng,
            )?);
        }

        // covariate mean and covariance
        let sigma_inv = linalg::spd_inverse(&theta.sigma_x, "covariate covariance").map_err(|e| with_iteration(e, iteration))?;
        let mut sum = DVector::zeros(p);
        for i in 0..n {
            for j in 0..p {
                sum[j] += xs[i * p + j];
            }
        }
        let prec = &sigma_inv * n as f64 + DMatrix::identity(p, p) / prior.mu_variance;
        let chol = linalg::cholesky(&prec, "covariate mean precision").map_err(|e| with_iteration(e, iteration))?;
        let mean = chol.solve(&(&sigma_inv * sum + &prior.mu_mean / prior.mu_variance));
        theta.mu_x = linalg::draw_from_precision(&mean, &chol, &mut rng);
        let mut scatter = prior.sigma_scale.clone();
        for i in 0..n {
            let d = DVector::from_fn(p, |j, _| xs[i * p + j] - theta.mu_x[j]);
            scatter += &d * d.transpose();
        }
        theta.sigma_x = wishart::draw_inverse_wishart(prior.sigma_df + n as f64, &scatter, &mut rng)
            .map_err(|e| with_iteration(e, iteration))?;

        // missing values
        if !incomplete.is_empty() {
            let sampler = ConditionalSampler::new(spec, &theta, data).map_err(|e| with_iteration(e, iteration))?;
            for &i in &incomplete {
                ys[i] = sampler.draw_row(data, i, &mut rng, &mut xs[i * p..(i + 1) * p]);
            }
        }

        let flat = layout.flatten(&theta);
        if let Some((idx, v)) = flat.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > DIVERGENCE) {
            return Err(Error::DivergentChain {
                iteration,
                parameter: layout.names()[idx].clone(),
                value: *v,
            });
        }
        trace.push(flat.as_slice().to_vec());
        if iteration >= cfg.burn_in {
            retained.push(theta.clone());
            missing_states.push(missing_state(data, &xs, &ys));
        }
    }

    Ok(GibbsChain {
        spec: spec.clone(),
        layout,
        burn_in: cfg.burn_in,
        trace,
        retained,
        missing_states,
    })
}

fn missing_state(data: &ObservedDataset, xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let p = data.p();
    let mut out = Vec::with_capacity(data.missing_count());
    for i in 0..data.n() {
        for j in 0..p {
            if !data.is_observed(i, j) {
                out.push(xs[i * p + j]);
            }
        }
    }
    out.extend((0..data.n()).filter(|&i| !data.outcome_observed(i)).map(|i| ys[i]));
    out
}

/// Indices into the retained chain for the `m` imputations.
pub fn select_draws(retained: usize, m: usize, selection: Selection, seed: u64) -> Vec<usize> {
    assert!(m >= 1 && m <= retained, "m must be between 1 and the retained chain length");
    match selection {
        Selection::Random => {
            let mut r = rng::stream(seed, &[SELECT_STREAM]);
            rand::seq::index::sample(&mut r, retained, m).into_vec()
        }
        Selection::Thinned => (0..m).map(|j| (j * retained) / m + retained / (2 * m)).collect(),
    }
}

/// Completed dataset at a fixed `θ`: observed entries copied, missing ones
/// drawn from the posterior predictive.
pub fn complete_at<R: Rng + ?Sized>(
    data: &ObservedDataset,
    theta: &ThetaParams,
    spec: &JointModelSpec,
    rng: &mut R,
) -> Result<CompleteData> {
    Ok(ConditionalSampler::new(spec, theta, data)?.complete(data, rng))
}

/// `m` imputations from an existing chain.
pub fn impute_from_chain(
    data: &Arc<ObservedDataset>,
    chain: &GibbsChain,
    m: usize,
    selection: Selection,
    seed: u64,
) -> Result<Vec<ImputedDataset>> {
    let picks = select_draws(chain.retained.len(), m, selection, seed);
    picks
        .into_iter()
        .enumerate()
        .map(|(j, idx)| {
            let theta = chain.retained[idx].clone();
            let mut r = rng::stream(seed, &[IMPUTE_STREAM, j as u64]);
            let completed = complete_at(data, &theta, &chain.spec, &mut r)?;
            Ok(ImputedDataset {
                base: Arc::clone(data),
                index: j + 1,
                data: completed,
                theta,
            })
        })
        .collect()
}

/// Run the sampler and create `cfg.m` imputed datasets.
pub fn multiply_impute(
    data: &Arc<ObservedDataset>,
    spec: &JointModelSpec,
    prior: &PriorSpec,
    cfg: &GibbsConfig,
) -> Result<(Vec<ImputedDataset>, GibbsChain)> {
    let chain = gibbs_run(data, spec, prior, cfg)?;
    let imputed = impute_from_chain(data, &chain, cfg.m, cfg.selection, cfg.seed)?;
    Ok((imputed, chain))
}
