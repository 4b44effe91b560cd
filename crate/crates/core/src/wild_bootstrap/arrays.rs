use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{CompleteData, EstimatorKind, ImputedDataset, ObservedDataset, ThetaParams};
use crate::error::{Error, Result};
use crate::estimators::{fit_nuisance_with, NuisanceOptions, PsiFunctional};
use crate::imputer::{ConditionalSampler, JointModelSpec, ScoreContext, UnitValues};
use crate::rng;

const COMPLETION_STREAM: u64 = 0x636f_6e64;
const CHUNK: usize = 16;

/// Estimated martingale difference arrays for one estimator.
#[derive(Debug, Clone)]
pub struct MartingaleArrays {
    pub kind: EstimatorKind,
    pub n: usize,
    pub m: usize,
    /// One entry per unit.
    pub xi_obs: Vec<f64>,
    /// `n × m`, row-major: entry `(i, j)` has index `n + i·m + j` in the
    /// full array.
    pub xi_imp: Vec<f64>,
    pub gamma_hat: DVector<f64>,
    pub i_obs_inv: DMatrix<f64>,
    /// `n × dim θ`.
    pub mean_scores: DMatrix<f64>,
    pub cond_psi: Vec<f64>,
    /// `n⁻¹ Σ cond_psi`.
    pub tau_hat: f64,
    pub draws: usize,
}

impl MartingaleArrays {
    pub fn len(&self) -> usize {
        self.xi_obs.len() + self.xi_imp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `ξ̂_k` in index order `k = 1, …, n + nm`.
    pub fn xi(&self) -> impl Iterator<Item = f64> + '_ {
        self.xi_obs.iter().chain(&self.xi_imp).copied()
    }

    /// `Σ_k ξ̂_k`.
    pub fn sum(&self) -> f64 {
        self.xi().sum()
    }

    /// `n⁻¹ Σ_k ξ̂_k²`, the conditional variance of `T*` under unit-variance
    /// weights.
    pub fn exact_variance(&self) -> f64 {
        self.xi().map(|v| v * v).sum::<f64>() / self.n as f64
    }
}

/// Vertical concatenation of completed datasets.
pub fn stack(datasets: &[&CompleteData]) -> CompleteData {
    let p = datasets[0].p();
    let mut a = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for d in datasets {
        a.extend_from_slice(d.treatment());
        x.extend_from_slice(d.covariates());
        y.extend_from_slice(d.outcome());
    }
    CompleteData::new(a, x, y, p)
}

/// ψ with nuisances refit on the stacked imputations and expectation terms
/// frozen at their stack averages.
pub fn frozen_functionals(
    imputed: &[ImputedDataset],
    kinds: &[EstimatorKind],
    options: &NuisanceOptions,
) -> Result<Vec<PsiFunctional>> {
    let refs: Vec<&CompleteData> = imputed.iter().map(|imp| &imp.data).collect();
    let stacked = stack(&refs);
    let fit = fit_nuisance_with(&stacked, options).map_err(|e| e.at_stage("stacked nuisance fit"))?;
    kinds.iter().map(|&k| PsiFunctional::from_fit(&stacked, &fit, k)).collect()
}

/// Conditional expectations at `θ̂` shared by every estimator kind.
#[derive(Debug, Clone)]
pub struct ConditionalSummary {
    pub kinds: Vec<EstimatorKind>,
    pub functionals: Vec<PsiFunctional>,
    /// Per kind, `Ê{ψ | Z_obs,i, θ̂}` for every unit.
    pub cond_psi: Vec<Vec<f64>>,
    pub mean_scores: DMatrix<f64>,
    pub gamma_hat: Vec<DVector<f64>>,
    pub draws: usize,
}

struct Partial {
    psi: Vec<Vec<f64>>,
    psi_score: Vec<DVector<f64>>,
    scores: Vec<f64>,
}

fn unit_values<'a>(data: &'a ObservedDataset, i: usize, x: &'a [f64], y: f64) -> UnitValues<'a> {
    UnitValues {
        a: data.treatment(i) as f64,
        x,
        y,
        r_x: data.mask_row(i),
        r_y: data.outcome_observed(i),
    }
}

/// Draw `draws` completions of the dataset at `θ̂` and accumulate the
/// conditional means of ψ and of the score, and `Γ̂`, for every kind.
#[allow(clippy::too_many_arguments)]
pub fn conditional_summary(
    data: &ObservedDataset,
    imputed: &[ImputedDataset],
    theta_hat: &ThetaParams,
    spec: &JointModelSpec,
    kinds: &[EstimatorKind],
    draws: usize,
    options: &NuisanceOptions,
    seed: u64,
) -> Result<ConditionalSummary> {
    if draws == 0 {
        return Err(Error::Config("conditional draws must be positive".into()));
    }
    let functionals = frozen_functionals(imputed, kinds, options)?;
    let n = data.n();
    let p = data.p();
    let ctx = ScoreContext::new(spec, theta_hat)?;
    let d = ctx.dim();
    let sampler = ConditionalSampler::new(spec, theta_hat, data)?;
    let incomplete: Vec<usize> = (0..n).filter(|&i| !data.unit_complete(i)).collect();
    let n_inc = incomplete.len();
    let nk = kinds.len();

    let mut base = CompleteData::new(
        data.treatments().iter().map(|&t| t as f64).collect(),
        vec![0.0; n * p],
        vec![0.0; n],
        p,
    );
    let mut mean_scores = DMatrix::zeros(n, d);
    let mut s = vec![0.0; d];
    for i in 0..n {
        if data.unit_complete(i) {
            let x: Vec<f64> = data.covariate_row(i).iter().map(|v| v.expect("complete unit")).collect();
            let y = data.outcome(i).expect("complete unit");
            base.row_mut(i).copy_from_slice(&x);
            base.outcome_mut()[i] = y;
            ctx.score(unit_values(data, i, &x, y), &mut s);
            mean_scores.row_mut(i).copy_from_slice(&s);
        }
    }

    let one = |l: usize| -> Result<Partial> {
        let mut r = rng::stream(seed, &[COMPLETION_STREAM, l as u64]);
        let mut completion = base.clone();
        for &i in &incomplete {
            let mut x = vec![0.0; p];
            let y = sampler.draw_row(data, i, &mut r, &mut x);
            completion.row_mut(i).copy_from_slice(&x);
            completion.outcome_mut()[i] = y;
        }
        let mut scores = vec![0.0; n_inc * d];
        for (slot, &i) in incomplete.iter().enumerate() {
            let y = completion.outcome()[i];
            ctx.score(unit_values(data, i, completion.row(i), y), &mut scores[slot * d..(slot + 1) * d]);
        }
        let mut psi = Vec::with_capacity(nk);
        let mut psi_score = Vec::with_capacity(nk);
        for f in &functionals {
            let values = if f.is_unitwise() {
                let a = completion.treatment();
                let y = completion.outcome();
                let mut v = vec![0.0; n];
                for &i in &incomplete {
                    v[i] = f.evaluate_unit(a[i], completion.row(i), y[i]);
                }
                v
            } else {
                f.evaluate(&completion)?.psi
            };
            let mut acc = DVector::zeros(d);
            for (slot, &i) in incomplete.iter().enumerate() {
                for c in 0..d {
                    acc[c] += values[i] * scores[slot * d + c];
                }
            }
            psi.push(values);
            psi_score.push(acc);
        }
        Ok(Partial { psi, psi_score, scores })
    };

    let mut psi_sum = vec![vec![0.0; n]; nk];
    let mut psi_score_sum = vec![DVector::zeros(d); nk];
    let mut score_sum = vec![0.0; n_inc * d];
    let ls: Vec<usize> = (0..draws).collect();
    for chunk in ls.chunks(CHUNK) {
        let parts: Vec<Partial> = chunk.par_iter().map(|&l| one(l)).collect::<Result<_>>()?;
        for part in parts {
            for k in 0..nk {
                for (acc, v) in psi_sum[k].iter_mut().zip(&part.psi[k]) {
                    *acc += v;
                }
                psi_score_sum[k] += &part.psi_score[k];
            }
            for (acc, v) in score_sum.iter_mut().zip(&part.scores) {
                *acc += v;
            }
        }
    }

    let lf = draws as f64;
    for (slot, &i) in incomplete.iter().enumerate() {
        for c in 0..d {
            mean_scores[(i, c)] = score_sum[slot * d + c] / lf;
        }
    }
    let mut cond_psi = Vec::with_capacity(nk);
    let mut gamma_hat = Vec::with_capacity(nk);
    for (k, f) in functionals.iter().enumerate() {
        let mut cp: Vec<f64> = psi_sum[k].iter().map(|v| v / lf).collect();
        if f.is_unitwise() {
            let a = base.treatment();
            let y = base.outcome();
            for i in (0..n).filter(|&i| data.unit_complete(i)) {
                cp[i] = f.evaluate_unit(a[i], base.row(i), y[i]);
            }
        }
        let mut g = &psi_score_sum[k] / lf;
        for &i in &incomplete {
            g -= mean_scores.row(i).transpose() * cp[i];
        }
        gamma_hat.push(g / n as f64);
        cond_psi.push(cp);
    }

    Ok(ConditionalSummary {
        kinds: kinds.to_vec(),
        functionals,
        cond_psi,
        mean_scores,
        gamma_hat,
        draws,
    })
}

/// Assemble `ξ̂` for the `k`-th kind of a summary.
pub fn arrays_from_summary(
    data: &ObservedDataset,
    imputed: &[ImputedDataset],
    summary: &ConditionalSummary,
    k: usize,
    i_obs_inv: &DMatrix<f64>,
) -> Result<MartingaleArrays> {
    let n = data.n();
    let m = imputed.len();
    let nf = n as f64;
    let root = nf.sqrt();
    let cond_psi = summary.cond_psi[k].clone();
    let tau_hat = cond_psi.iter().sum::<f64>() / nf;
    let gamma_hat = summary.gamma_hat[k].clone();
    let projection = i_obs_inv * &gamma_hat;
    let correction = &summary.mean_scores * &projection;
    let xi_obs = (0..n).map(|i| (cond_psi[i] - tau_hat + correction[i]) / root).collect();

    let functional = &summary.functionals[k];
    let mut xi_imp = vec![0.0; n * m];
    for (j, imp) in imputed.iter().enumerate() {
        let psi = functional.evaluate(&imp.data)?.psi;
        for i in (0..n).filter(|&i| !data.unit_complete(i)) {
            xi_imp[i * m + j] = (psi[i] - cond_psi[i]) / (root * m as f64);
        }
    }
    Ok(MartingaleArrays {
        kind: summary.kinds[k],
        n,
        m,
        xi_obs,
        xi_imp,
        gamma_hat,
        i_obs_inv: i_obs_inv.clone(),
        mean_scores: summary.mean_scores.clone(),
        cond_psi,
        tau_hat,
        draws: summary.draws,
    })
}

/// `Γ̂` for one kind.
#[allow(clippy::too_many_arguments)]
pub fn gamma_hat(
    data: &ObservedDataset,
    imputed: &[ImputedDataset],
    theta_hat: &ThetaParams,
    spec: &JointModelSpec,
    kind: EstimatorKind,
    draws: usize,
    seed: u64,
) -> Result<DVector<f64>> {
    let summary = conditional_summary(data, imputed, theta_hat, spec, &[kind], draws, &NuisanceOptions::default(), seed)?;
    Ok(summary.gamma_hat[0].clone())
}

/// Martingale arrays for one kind.
#[allow(clippy::too_many_arguments)]
pub fn build_arrays(
    data: &ObservedDataset,
    imputed: &[ImputedDataset],
    theta_hat: &ThetaParams,
    spec: &JointModelSpec,
    kind: EstimatorKind,
    draws: usize,
    i_obs_inv: &DMatrix<f64>,
    seed: u64,
) -> Result<MartingaleArrays> {
    let summary = conditional_summary(data, imputed, theta_hat, spec, &[kind], draws, &NuisanceOptions::default(), seed)?;
    arrays_from_summary(data, imputed, &summary, 0, i_obs_inv)
}
