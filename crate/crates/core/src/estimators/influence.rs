//! Influence functions of the four estimators with empirical plug-ins.
//!
//! Each ψ is written as a difference of arm terms `ψ = ψ₁ − ψ₀`, where
//! `ψ_a` linearizes the arm-mean estimate `Ê{Y(a)}`. Every population
//! expectation in ψ is replaced by a sample mean over the dataset the
//! functional is built on, and a per-arm centering constant makes
//! `mean(ψ_a) = Ê{Y(a)}` exactly. For matching the constant is the
//! estimated conditional matching bias and is recomputed on every dataset
//! the functional is evaluated on.

use nalgebra::{DMatrix, DVector};

use super::{clip_propensity, matching, NuisanceFit};
use crate::data::{CompleteData, EstimatorKind, MatchOn};
use crate::error::Result;
use crate::linalg;
use crate::normal;
use crate::probit;

/// Plug-in estimates of the expectations appearing in ψ.
#[derive(Debug, Clone)]
pub struct ExpectationTerms {
    /// `E(μ̇_a)`: the mean of `[1, X]`.
    pub mu_dot: DVector<f64>,
    /// `E(Ṡ_a)` for a = 0, 1.
    pub s_dot: [DMatrix<f64>; 2],
    /// Probit Fisher information `Σ_α`.
    pub sigma_alpha: DMatrix<f64>,
    /// The bracketed expectation multiplying `Σ_α⁻¹ S` in each arm term.
    pub propensity_bracket: [DVector<f64>; 2],
    /// AIPW: `E{(1 − A/e) μ̇₁}` and `E{(1 − (1−A)/(1−e)) μ̇₀}`.
    pub augmentation_mu_dot: [DVector<f64>; 2],
}

/// ψ frozen as a function of a unit's `(A, X, Y)`: nuisance parameters and
/// expectation terms are fixed at construction.
#[derive(Debug, Clone)]
pub struct PsiFunctional {
    kind: EstimatorKind,
    beta: [DVector<f64>; 2],
    alpha: DVector<f64>,
    propensity_columns: Option<Vec<usize>>,
    /// ψ_a gains `outcome_coef[a] · S_a`.
    outcome_coef: [DVector<f64>; 2],
    /// ψ_a gains `propensity_coef[a] · S`.
    propensity_coef: [DVector<f64>; 2],
    centering: [f64; 2],
    pub terms: ExpectationTerms,
}

/// Per-unit arm terms and their difference.
#[derive(Debug, Clone)]
pub struct ArmInfluence {
    pub arm1: Vec<f64>,
    pub arm0: Vec<f64>,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InfluenceVector {
    pub kind: EstimatorKind,
    pub psi: Vec<f64>,
    pub arm1: Vec<f64>,
    pub arm0: Vec<f64>,
    pub tau_hat: f64,
    pub functional: PsiFunctional,
}

impl InfluenceVector {
    pub fn n(&self) -> usize {
        self.psi.len()
    }
}

/// Per-unit pieces shared by the smooth estimators.
struct UnitParts {
    xt: DVector<f64>,
    mu: [f64; 2],
    e: f64,
    edot: DVector<f64>,
    score: DVector<f64>,
}

impl PsiFunctional {
    fn propensity_row(&self, x: &[f64]) -> DVector<f64> {
        prop_row(&self.propensity_columns, x)
    }

    fn unit_parts(&self, a: f64, x: &[f64]) -> UnitParts {
        let xt = augmented(x);
        let mu = [xt.dot(&self.beta[0]), xt.dot(&self.beta[1])];
        let xp = self.propensity_row(x);
        let eta = xp.dot(&self.alpha);
        let e = clip_propensity(normal::cdf(eta));
        let edot = &xp * normal::pdf(eta);
        let score = &xp * probit::generalized_residual(eta, a);
        UnitParts { xt, mu, e, edot, score }
    }

    /// Raw (uncentered) arm terms for one unit. Not defined for matching.
    pub fn unit_arms(&self, a: f64, x: &[f64], y: f64) -> (f64, f64) {
        let u = self.unit_parts(a, x);
        let s1 = &u.xt * (a * (y - u.mu[1]));
        let s0 = &u.xt * ((1.0 - a) * (y - u.mu[0]));
        let (base1, base0) = match self.kind {
            EstimatorKind::Regression => (u.mu[1], u.mu[0]),
            EstimatorKind::Ipw => (a * y / u.e, (1.0 - a) * y / (1.0 - u.e)),
            EstimatorKind::Aipw => (
                a * y / u.e + (1.0 - a / u.e) * u.mu[1],
                (1.0 - a) * y / (1.0 - u.e) + (1.0 - (1.0 - a) / (1.0 - u.e)) * u.mu[0],
            ),
            EstimatorKind::Matching { .. } => panic!("matching influence is not defined unit-by-unit"),
        };
        (
            base1 + self.outcome_coef[1].dot(&s1) + self.propensity_coef[1].dot(&u.score),
            base0 + self.outcome_coef[0].dot(&s0) + self.propensity_coef[0].dot(&u.score),
        )
    }

    /// Centered arm terms for one unit (smooth estimators only).
    pub fn evaluate_unit(&self, a: f64, x: &[f64], y: f64) -> f64 {
        let (p1, p0) = self.unit_arms(a, x, y);
        (p1 + self.centering[1]) - (p0 + self.centering[0])
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn is_unitwise(&self) -> bool {
        !matches!(self.kind, EstimatorKind::Matching { .. })
    }

    fn matching_points(&self, data: &CompleteData, on: MatchOn) -> (Vec<f64>, usize) {
        match on {
            MatchOn::Covariates => (data.covariates().to_vec(), data.p()),
            MatchOn::PropensityScore => (
                (0..data.n())
                    .map(|i| clip_propensity(normal::cdf(self.propensity_row(data.row(i)).dot(&self.alpha))))
                    .collect(),
                1,
            ),
        }
    }

    /// Raw matching arm terms `μ_a(X) + 1{A=a}(1 + K/M)(Y − μ_a(X))` and the
    /// matching arm-mean estimates.
    fn matching_arms(&self, data: &CompleteData, m: usize, on: MatchOn) -> Result<(Vec<f64>, Vec<f64>, [f64; 2])> {
        let (points, dim) = self.matching_points(data, on);
        let treated: Vec<bool> = (0..data.n()).map(|i| data.treated(i)).collect();
        let matches = matching::nearest_neighbors(&points, dim, &treated, m)?;
        let y = data.outcome();
        let n = data.n();
        let mut arm1 = Vec::with_capacity(n);
        let mut arm0 = Vec::with_capacity(n);
        let mut means = [0.0; 2];
        for i in 0..n {
            let xt = augmented(data.row(i));
            let mu0 = xt.dot(&self.beta[0]);
            let mu1 = xt.dot(&self.beta[1]);
            let weight = 1.0 + matches.counts[i] as f64 / m as f64;
            let matched = matches.of(i).iter().map(|&j| y[j]).sum::<f64>() / m as f64;
            if treated[i] {
                arm1.push(mu1 + weight * (y[i] - mu1));
                arm0.push(mu0);
                means[1] += y[i];
                means[0] += matched;
            } else {
                arm1.push(mu1);
                arm0.push(mu0 + weight * (y[i] - mu0));
                means[1] += matched;
                means[0] += y[i];
            }
        }
        Ok((arm1, arm0, [means[0] / n as f64, means[1] / n as f64]))
    }

    /// Centered arm terms on every unit of `data`.
    pub fn evaluate(&self, data: &CompleteData) -> Result<ArmInfluence> {
        let (arm1, arm0) = match self.kind {
            EstimatorKind::Matching { matches, on } => {
                let (mut arm1, mut arm0, means) = self.matching_arms(data, matches, on)?;
                recenter(&mut arm1, means[1]);
                recenter(&mut arm0, means[0]);
                (arm1, arm0)
            }
            _ => {
                let a = data.treatment();
                let y = data.outcome();
                (0..data.n())
                    .map(|i| {
                        let (p1, p0) = self.unit_arms(a[i], data.row(i), y[i]);
                        (p1 + self.centering[1], p0 + self.centering[0])
                    })
                    .unzip()
            }
        };
        let psi = arm1.iter().zip(&arm0).map(|(a, b)| a - b).collect();
        Ok(ArmInfluence { arm1, arm0, psi })
    }

    /// Build ψ on `data` from fitted nuisances, with every expectation
    /// replaced by its sample mean over `data`.
    pub fn from_fit(data: &CompleteData, fit: &NuisanceFit, kind: EstimatorKind) -> Result<Self> {
        let n = data.n() as f64;
        let k = data.p() + 1;
        let kp = fit.alpha_hat.len();
        let a = data.treatment();
        let y = data.outcome();
        let mut functional = PsiFunctional {
            kind,
            beta: [fit.beta0_hat.clone(), fit.beta1_hat.clone()],
            alpha: fit.alpha_hat.clone(),
            propensity_columns: fit.propensity_columns.clone(),
            outcome_coef: [DVector::zeros(k), DVector::zeros(k)],
            propensity_coef: [DVector::zeros(kp), DVector::zeros(kp)],
            centering: [0.0; 2],
            terms: ExpectationTerms {
                mu_dot: DVector::zeros(k),
                s_dot: [DMatrix::zeros(k, k), DMatrix::zeros(k, k)],
                sigma_alpha: DMatrix::zeros(kp, kp),
                propensity_bracket: [DVector::zeros(kp), DVector::zeros(kp)],
                augmentation_mu_dot: [DVector::zeros(k), DVector::zeros(k)],
            },
        };
        let mut t = functional.terms.clone();
        for i in 0..data.n() {
            let u = functional.unit_parts(a[i], data.row(i));
            let xp = functional.propensity_row(data.row(i));
            let eta = xp.dot(&functional.alpha);
            let raw_e = normal::cdf(eta);
            t.mu_dot += &u.xt;
            let outer = &u.xt * u.xt.transpose();
            t.s_dot[1] -= &outer * a[i];
            t.s_dot[0] -= &outer * (1.0 - a[i]);
            let info_w = normal::pdf(eta).powi(2) / (raw_e * (1.0 - raw_e)).max(f64::MIN_POSITIVE);
            t.sigma_alpha += (&xp * xp.transpose()) * info_w;
            let (r1, r0) = match kind {
                EstimatorKind::Aipw => (y[i] - u.mu[1], y[i] - u.mu[0]),
                _ => (y[i], y[i]),
            };
            t.propensity_bracket[1] += &u.edot * (a[i] * r1 / (u.e * u.e));
            t.propensity_bracket[0] += &u.edot * ((1.0 - a[i]) * r0 / ((1.0 - u.e) * (1.0 - u.e)));
            t.augmentation_mu_dot[1] += &u.xt * (1.0 - a[i] / u.e);
            t.augmentation_mu_dot[0] += &u.xt * (1.0 - (1.0 - a[i]) / (1.0 - u.e));
        }
        t.mu_dot /= n;
        t.s_dot[0] /= n;
        t.s_dot[1] /= n;
        t.sigma_alpha /= n;
        for arm in 0..2 {
            t.propensity_bracket[arm] /= n;
            t.augmentation_mu_dot[arm] /= n;
        }

        // ψ_a gains −E(·)E(Ṡ_a)⁻¹S_a; E(Ṡ_a) = −G_a with G_a SPD.
        let solve_s_dot = |arm: usize, v: &DVector<f64>| -> Result<DVector<f64>> {
            let g = -&t.s_dot[arm];
            Ok(linalg::cholesky(&g, "outcome estimating-equation derivative")?.solve(v))
        };
        let solve_sigma_alpha = |v: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(linalg::cholesky(&t.sigma_alpha, "probit information")?.solve(v))
        };
        match kind {
            EstimatorKind::Regression => {
                functional.outcome_coef = [solve_s_dot(0, &t.mu_dot)?, solve_s_dot(1, &t.mu_dot)?];
            }
            EstimatorKind::Ipw => {
                functional.propensity_coef = [
                    solve_sigma_alpha(&t.propensity_bracket[0])?,
                    -solve_sigma_alpha(&t.propensity_bracket[1])?,
                ];
            }
            EstimatorKind::Aipw => {
                functional.outcome_coef = [
                    solve_s_dot(0, &t.augmentation_mu_dot[0])?,
                    solve_s_dot(1, &t.augmentation_mu_dot[1])?,
                ];
                functional.propensity_coef = [
                    solve_sigma_alpha(&t.propensity_bracket[0])?,
                    -solve_sigma_alpha(&t.propensity_bracket[1])?,
                ];
            }
            EstimatorKind::Matching { .. } => {}
        }
        functional.terms = t;

        if functional.is_unitwise() {
            // Arm-mean estimate is mean(base_a); center the correction terms.
            let mut raw = [0.0; 2];
            let mut base = [0.0; 2];
            let probe = PsiFunctional {
                outcome_coef: [DVector::zeros(k), DVector::zeros(k)],
                propensity_coef: [DVector::zeros(kp), DVector::zeros(kp)],
                ..functional.clone()
            };
            for i in 0..data.n() {
                let (p1, p0) = functional.unit_arms(a[i], data.row(i), y[i]);
                let (b1, b0) = probe.unit_arms(a[i], data.row(i), y[i]);
                raw[1] += p1;
                raw[0] += p0;
                base[1] += b1;
                base[0] += b0;
            }
            functional.centering = [(base[0] - raw[0]) / n, (base[1] - raw[1]) / n];
        }
        Ok(functional)
    }
}

fn recenter(values: &mut [f64], target_mean: f64) {
    let shift = target_mean - values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v += shift);
}

pub(crate) fn augmented(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied()))
}

pub(crate) fn prop_row(columns: &Option<Vec<usize>>, x: &[f64]) -> DVector<f64> {
    match columns {
        None => augmented(x),
        Some(cols) => DVector::from_iterator(cols.len() + 1, std::iter::once(1.0).chain(cols.iter().map(|&c| x[c]))),
    }
}

/// Influence vector of `kind` on `data` at the fitted nuisances.
pub fn influence(data: &CompleteData, fit: &NuisanceFit, kind: EstimatorKind) -> Result<InfluenceVector> {
    let functional = PsiFunctional::from_fit(data, fit, kind)?;
    let arms = functional.evaluate(data)?;
    let tau_hat = super::tau_point(data, fit, kind)?;
    Ok(InfluenceVector {
        kind,
        psi: arms.psi,
        arm1: arms.arm1,
        arm0: arms.arm0,
        tau_hat,
        functional,
    })
}
