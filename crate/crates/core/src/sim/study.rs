use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EstimatorKind;
use crate::error::{Error, Result};
use crate::estimators::NuisanceOptions;
use crate::imputer::{gibbs_run, impute_from_chain, GibbsConfig, JointModelSpec, PriorSpec, Selection};
use crate::mi::{estimate_kinds, mi_estimate_kinds, rubin_ci};
use crate::rng;
use crate::sim::scenario::{generate, ScenarioSpec};
use crate::wild_bootstrap::{
    arrays_from_summary, bootstrap_ci, bootstrap_many, conditional_summary, obs_information_chain, CiStyle,
    MartingaleArrays, WeightScheme,
};

const REP_STREAM: u64 = 0x7265_7073;
const MAX_FAILURE_RATE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub m_values: Vec<usize>,
    pub kinds: Vec<EstimatorKind>,
    /// Bootstrap replicates per replication.
    pub b: usize,
    pub scheme: WeightScheme,
    pub gibbs_iterations: usize,
    pub burn_in: usize,
    /// Completions `L` used for conditional expectations.
    pub cond_draws: usize,
    pub selection: Selection,
    pub level: f64,
    pub seed: u64,
    /// Keep every `T*` replicate in the report.
    pub keep_replicates: bool,
}

impl StudyConfig {
    pub fn desk(scenario: ScenarioSpec, seed: u64) -> Self {
        StudyConfig {
            scenario,
            reps: 500,
            m_values: vec![5],
            kinds: EstimatorKind::all(1).to_vec(),
            b: 300,
            scheme: WeightScheme::Mammen,
            gibbs_iterations: 1500,
            burn_in: 500,
            cond_draws: 200,
            selection: Selection::Random,
            level: 0.95,
            seed,
            keep_replicates: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        if self.m_values.is_empty() || self.m_values.iter().any(|&m| m < 2) {
            return Err(Error::Config("every m must be at least 2".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if self.b < 2 {
            return Err(Error::Config("B must be at least 2".into()));
        }
        if self.cond_draws == 0 {
            return Err(Error::Config("cond-draws must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidLevel(self.level));
        }
        if self.scenario.n < 10 {
            return Err(Error::Config("n must be at least 10".into()));
        }
        self.gibbs().check()
    }

    fn max_m(&self) -> usize {
        *self.m_values.iter().max().expect("checked non-empty")
    }

    fn gibbs(&self) -> GibbsConfig {
        GibbsConfig {
            iterations: self.gibbs_iterations,
            burn_in: self.burn_in,
            m: self.max_m(),
            selection: self.selection,
            seed: self.seed,
        }
    }
}

/// Everything kept from one replication for one `(estimator, m)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDraw {
    pub tau_mi: f64,
    pub v_rubin: f64,
    pub rubin_ci: (f64, f64),
    pub v_bs: f64,
    pub quantile_ci: (f64, f64),
    pub wald_ci: (f64, f64),
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    /// Full-sample estimate on the shadow data, per kind.
    pub tau_n: Vec<f64>,
    /// Indexed `[m index][kind index]`.
    pub cells: Vec<Vec<CellDraw>>,
}

/// One replication.
pub fn run_replication(config: &StudyConfig, rep: usize) -> Result<RepOutcome> {
    let seed = rng::derive_seed(config.seed, &[REP_STREAM, rep as u64]);
    let (observed, shadow) = generate(&config.scenario, &mut rng::stream(seed, &[0]));
    let options = NuisanceOptions::default();
    let tau_n = estimate_kinds(&shadow, &config.kinds, &options)
        .map_err(|e| e.at_stage("shadow estimate"))?
        .into_iter()
        .map(|(t, _)| t)
        .collect();
    let observed = Arc::new(observed);
    let spec = JointModelSpec::for_mechanism(config.scenario.analysis, &observed);
    let prior = PriorSpec::new(observed.p());
    let gibbs = GibbsConfig {
        seed: rng::derive_seed(seed, &[1]),
        ..config.gibbs()
    };
    let chain = gibbs_run(&observed, &spec, &prior, &gibbs)?;
    let theta_hat = chain.posterior_mean();
    let i_obs_inv = obs_information_chain(&chain, observed.n()).map_err(|e| e.at_stage("observed information"))?;
    let mut cells = Vec::with_capacity(config.m_values.len());
    for (mi, &m) in config.m_values.iter().enumerate() {
        let imputed = impute_from_chain(&observed, &chain, m, config.selection, rng::derive_seed(seed, &[2, mi as u64]))?;
        let rubin = mi_estimate_kinds(&imputed, &config.kinds, &options)?;
        let summary = conditional_summary(
            &observed,
            &imputed,
            &theta_hat,
            &spec,
            &config.kinds,
            config.cond_draws,
            &options,
            rng::derive_seed(seed, &[3, mi as u64]),
        )?;
        let arrays: Vec<MartingaleArrays> = (0..config.kinds.len())
            .map(|k| arrays_from_summary(&observed, &imputed, &summary, k, &i_obs_inv))
            .collect::<Result<_>>()?;
        let refs: Vec<&MartingaleArrays> = arrays.iter().collect();
        let boots = bootstrap_many(&refs, config.scheme, config.b, rng::derive_seed(seed, &[4, mi as u64]));
        let row = rubin
            .iter()
            .zip(boots)
            .map(|(r, bs)| {
                Ok(CellDraw {
                    tau_mi: r.tau_mi,
                    v_rubin: r.v_mi,
                    rubin_ci: rubin_ci(r, config.level)?,
                    v_bs: bs.v_bs,
                    quantile_ci: bootstrap_ci(r.tau_mi, &bs.replicates, bs.v_bs, config.level, CiStyle::Quantile)?,
                    wald_ci: bootstrap_ci(r.tau_mi, &bs.replicates, bs.v_bs, config.level, CiStyle::Wald)?,
                    replicates: bs.replicates,
                })
            })
            .collect::<Result<_>>()?;
        cells.push(row);
    }
    Ok(RepOutcome { tau_n, cells })
}

/// Interval summary for one variance method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean_variance: f64,
    /// `{E(V̂) − var(τ̂_MI)} / var(τ̂_MI) × 100`.
    pub relative_bias: f64,
    pub coverage: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub estimator: EstimatorKind,
    pub m: usize,
    pub mean_tau: f64,
    /// Monte Carlo standard error of `mean_tau`.
    pub mean_tau_se: f64,
    pub mc_variance: f64,
    pub rubin: MethodSummary,
    pub bs_quantile: MethodSummary,
    pub bs_wald: MethodSummary,
    /// Shadow full-sample mean and its Monte Carlo SE.
    pub mean_tau_n: f64,
    pub mean_tau_n_se: f64,
    pub var_n: f64,
    pub var_diff: f64,
    /// `cov(τ̂_MI − τ̂_n, τ̂_n)` and its Monte Carlo SE.
    pub cov_diff_n: f64,
    pub cov_diff_n_se: f64,
    /// Pooled `T*` over all replications, present when requested.
    pub replicates: Option<Vec<f64>>,
    /// `τ̂_MI` per successful replication.
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: String,
    pub n: usize,
    pub true_tau: f64,
    pub level: f64,
    pub reps: usize,
    pub failed: usize,
    pub cells: Vec<CellSummary>,
}

impl StudyReport {
    pub fn cell(&self, estimator: &str, m: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.estimator.name() == estimator && c.m == m)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let mu = mean(v);
    v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Sample covariance and the standard error of that estimate.
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1.0);
    let se = (variance(&prods) / n).sqrt();
    (cov, se)
}

fn summarize_method(variances: &[f64], cis: &[(f64, f64)], mc_var: f64, truth: f64) -> MethodSummary {
    let mean_variance = mean(variances);
    let covered = cis.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    MethodSummary {
        mean_variance,
        relative_bias: (mean_variance - mc_var) / mc_var * 100.0,
        coverage: 100.0 * covered as f64 / cis.len() as f64,
        mean_width: mean(&cis.iter().map(|(lo, hi)| hi - lo).collect::<Vec<_>>()),
    }
}

/// Aggregate successful replications, in replication order.
pub fn summarize(config: &StudyConfig, outcomes: &[RepOutcome], failed: usize) -> StudyReport {
    let truth = config.scenario.true_tau;
    let mut cells = Vec::new();
    for (k, &kind) in config.kinds.iter().enumerate() {
        for (mi, &m) in config.m_values.iter().enumerate() {
            let draws: Vec<&CellDraw> = outcomes.iter().map(|o| &o.cells[mi][k]).collect();
            let tau: Vec<f64> = draws.iter().map(|d| d.tau_mi).collect();
            let tau_n: Vec<f64> = outcomes.iter().map(|o| o.tau_n[k]).collect();
            let diff: Vec<f64> = tau.iter().zip(&tau_n).map(|(a, b)| a - b).collect();
            let mc_variance = variance(&tau);
            let reps = tau.len() as f64;
            let v_rubin: Vec<f64> = draws.iter().map(|d| d.v_rubin).collect();
            let v_bs: Vec<f64> = draws.iter().map(|d| d.v_bs).collect();
            let rubin_cis: Vec<_> = draws.iter().map(|d| d.rubin_ci).collect();
            let q_cis: Vec<_> = draws.iter().map(|d| d.quantile_ci).collect();
            let w_cis: Vec<_> = draws.iter().map(|d| d.wald_ci).collect();
            let (cov_diff_n, cov_diff_n_se) = covariance_with_se(&diff, &tau_n);
            cells.push(CellSummary {
                estimator: kind,
                m,
                mean_tau: mean(&tau),
                mean_tau_se: (mc_variance / reps).sqrt(),
                mc_variance,
                rubin: summarize_method(&v_rubin, &rubin_cis, mc_variance, truth),
                bs_quantile: summarize_method(&v_bs, &q_cis, mc_variance, truth),
                bs_wald: summarize_method(&v_bs, &w_cis, mc_variance, truth),
                mean_tau_n: mean(&tau_n),
                mean_tau_n_se: (variance(&tau_n) / reps).sqrt(),
                var_n: variance(&tau_n),
                var_diff: variance(&diff),
                cov_diff_n,
                cov_diff_n_se,
                replicates: config
                    .keep_replicates
                    .then(|| draws.iter().flat_map(|d| d.replicates.iter().copied()).collect()),
                estimates: tau,
            });
        }
    }
    StudyReport {
        scenario: config.scenario.tag.to_string(),
        n: config.scenario.n,
        true_tau: truth,
        level: config.level,
        reps: config.reps,
        failed,
        cells,
    }
}

/// Run every replication and aggregate. Replications that error are logged
/// and dropped; the study fails when more than 2% of them do.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.check()?;
    let results: Vec<Result<RepOutcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_replication(config, rep).map_err(|e| e.at_stage(format!("replication {rep}"))))
        .collect();
    let mut outcomes = Vec::with_capacity(config.reps);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("{e}");
                failed += 1;
            }
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * config.reps as f64 || outcomes.len() < 2 {
        return Err(Error::StudyFailed {
            failed,
            total: config.reps,
        });
    }
    if failed > 0 {
        log::warn!("{failed} of {} replications excluded", config.reps);
    }
    Ok(summarize(config, &outcomes, failed))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F₁ − F₂|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::Scenario;

    fn tiny(seed: u64) -> StudyConfig {
        StudyConfig {
            reps: 3,
            m_values: vec![2, 3],
            b: 20,
            gibbs_iterations: 120,
            burn_in: 40,
            cond_draws: 8,
            keep_replicates: true,
            ..StudyConfig::desk(ScenarioSpec::new(Scenario::A, 150), seed)
        }
    }

    #[test]
    fn study_is_deterministic() {
        let a = run_study(&tiny(5)).unwrap();
        let b = run_study(&tiny(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 8);
        assert_eq!(a.cells[0].replicates.as_ref().unwrap().len(), 60);
        for c in &a.cells {
            for s in [c.rubin, c.bs_quantile, c.bs_wald] {
                assert!((0.0..=100.0).contains(&s.coverage));
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = tiny(1);
        c.m_values = vec![1];
        assert!(matches!(run_study(&c), Err(Error::Config(_))));
    }

    #[test]
    fn covariance_se_matches_hand_values() {
        let (c, _) = covariance_with_se(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_extremes() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0]) - 0.5).abs() < 1e-12);
    }
}
