use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{validate, ImputedDataset, ObservedDataset};
use crate::error::{Error, Result};
use crate::estimators::NuisanceOptions;
use crate::imputer::{multiply_impute, GibbsChain, JointModelSpec};
use crate::io::config::AnalysisConfig;
use crate::io::table::write_complete_csv;
use crate::mi::{mi_estimate_kinds, rubin_ci};
use crate::rng;
use crate::wild_bootstrap::{
    arrays_from_summary, bootstrap_ci, bootstrap_many, conditional_summary, obs_information_chain,
    obs_information_jacobian, CiStyle, MartingaleArrays,
};

const JACOBIAN_DRAWS: usize = 200;

/// Results for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub estimator: String,
    pub tau_mi: f64,
    pub rubin_variance: f64,
    pub rubin_df: f64,
    pub missing_information: f64,
    pub rubin_lower: f64,
    pub rubin_upper: f64,
    pub bs_variance: f64,
    pub quantile_lower: f64,
    pub quantile_upper: f64,
    pub wald_lower: f64,
    pub wald_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub n: usize,
    pub p: usize,
    pub missing_entries: usize,
    pub m: usize,
    pub b: usize,
    pub cond_draws: usize,
    pub weights: String,
    pub mechanism: String,
    /// How the inverse observed information was obtained.
    pub information: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub rows: Vec<AnalysisRow>,
    pub manifest: Manifest,
}

fn check_data(data: &ObservedDataset) -> Result<()> {
    let report = validate(data);
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::InvalidData(report.messages().join("; ")))
    }
}

fn run_imputer(data: &Arc<ObservedDataset>, config: &AnalysisConfig) -> Result<(Vec<ImputedDataset>, GibbsChain, JointModelSpec)> {
    check_data(data)?;
    let spec = JointModelSpec::for_mechanism(config.mechanism, data);
    spec.check(data)?;
    let prior = config.prior_for(data.p());
    let (imputed, chain) = multiply_impute(data, &spec, &prior, &config.gibbs()).map_err(|e| e.at_stage("imputation"))?;
    Ok((imputed, chain, spec))
}

/// Multiple imputation, Rubin's rule and the wild bootstrap for every
/// configured estimator.
pub fn analyze(data: &ObservedDataset, config: &AnalysisConfig) -> Result<AnalysisReport> {
    let data = Arc::new(data.clone());
    let (imputed, chain, spec) = run_imputer(&data, config)?;
    let kinds = config.kinds(data.p());
    let options = NuisanceOptions::default();
    let rubin = mi_estimate_kinds(&imputed, &kinds, &options).map_err(|e| e.at_stage("estimation"))?;

    let theta_hat = chain.posterior_mean();
    let (i_obs_inv, information) = match obs_information_chain(&chain, data.n()) {
        Ok(m) => (m, "chain covariance"),
        Err(Error::InformationNotPositiveDefinite { .. }) => {
            log::warn!("chain covariance not positive-definite; using the numerical Jacobian");
            let seed = rng::derive_seed(config.seed, &[1]);
            let inv = obs_information_jacobian(&data, &theta_hat, &spec, JACOBIAN_DRAWS, seed)
                .map_err(|e| e.at_stage("observed information"))?;
            (inv, "numerical jacobian")
        }
        Err(e) => return Err(e.at_stage("observed information")),
    };
    let summary = conditional_summary(
        &data,
        &imputed,
        &theta_hat,
        &spec,
        &kinds,
        config.cond_draws,
        &options,
        rng::derive_seed(config.seed, &[2]),
    )
    .map_err(|e| e.at_stage("conditional expectations"))?;
    let arrays: Vec<MartingaleArrays> = (0..kinds.len())
        .map(|k| arrays_from_summary(&data, &imputed, &summary, k, &i_obs_inv))
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("martingale arrays"))?;
    let refs: Vec<&MartingaleArrays> = arrays.iter().collect();
    let boots = bootstrap_many(&refs, config.weights, config.b, rng::derive_seed(config.seed, &[3]));

    let mut rows = Vec::with_capacity(kinds.len());
    for (r, bs) in rubin.iter().zip(&boots) {
        let (rubin_lower, rubin_upper) = rubin_ci(r, config.level)?;
        let (quantile_lower, quantile_upper) =
            bootstrap_ci(r.tau_mi, &bs.replicates, bs.v_bs, config.level, CiStyle::Quantile)?;
        let (wald_lower, wald_upper) = bootstrap_ci(r.tau_mi, &bs.replicates, bs.v_bs, config.level, CiStyle::Wald)?;
        rows.push(AnalysisRow {
            estimator: r.kind.name().to_string(),
            tau_mi: r.tau_mi,
            rubin_variance: r.v_mi,
            rubin_df: r.nu,
            missing_information: r.lambda(),
            rubin_lower,
            rubin_upper,
            bs_variance: bs.v_bs,
            quantile_lower,
            quantile_upper,
            wald_lower,
            wald_upper,
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_hash: config.hash.clone(),
        n: data.n(),
        p: data.p(),
        missing_entries: data.missing_count(),
        m: config.m,
        b: config.b,
        cond_draws: config.cond_draws,
        weights: config.weights.name().to_string(),
        mechanism: format!("{:?}", config.mechanism),
        information: information.to_string(),
    };
    Ok(AnalysisReport { rows, manifest })
}

/// Path of the manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Write the report as CSV at `out` and the manifest beside it.
pub fn write_report(out: &Path, report: &AnalysisReport) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(out)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let manifest = manifest_path(out);
    std::fs::write(&manifest, serde_json::to_string_pretty(&report.manifest)?)?;
    Ok(manifest)
}

/// Run the imputer and write `m` completed CSVs into `out_dir`.
pub fn impute_to_dir(data: &ObservedDataset, config: &AnalysisConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let data = Arc::new(data.clone());
    let (imputed, _, _) = run_imputer(&data, config)?;
    std::fs::create_dir_all(out_dir)?;
    imputed
        .iter()
        .map(|imp| {
            let path = out_dir.join(format!("imputation_{}.csv", imp.index));
            write_complete_csv(std::fs::File::create(&path)?, &imp.data, &config.roles)?;
            Ok(path)
        })
        .collect()
}
