use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{EstimatorKind, MatchOn};
use crate::error::{Error, Result};
use crate::imputer::{GibbsConfig, Mechanism, PriorSpec, Selection};
use crate::io::table::ColumnRoles;
use crate::wild_bootstrap::WeightScheme;

/// Parsed `section.key = value` lines. `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", k + 1)))?;
            let key = key.trim();
            let valid = key
                .split_once('.')
                .is_some_and(|(s, n)| !s.is_empty() && !n.is_empty() && !n.contains('.'));
            if !valid || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: malformed key '{key}'", k + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", k + 1)));
            }
        }
        Ok(FlatConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("cannot parse '{v}' for {key}")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }
}

const KNOWN_KEYS: &[&str] = &[
    "data.treatment",
    "data.outcome",
    "data.confounders",
    "data.missing_token",
    "model.mechanism",
    "prior.coef_variance",
    "prior.precision_shape",
    "prior.precision_rate",
    "prior.mu_variance",
    "prior.sigma_scale",
    "prior.sigma_df",
    "gibbs.iterations",
    "gibbs.burn_in",
    "gibbs.selection",
    "mi.m",
    "bootstrap.b",
    "bootstrap.weights",
    "bootstrap.cond_draws",
    "bootstrap.level",
    "estimators.list",
    "estimators.matches",
    "estimators.match_on",
    "run.seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchVariable {
    /// Propensity score when there are more than three confounders,
    /// covariates otherwise.
    Auto,
    Covariates,
    PropensityScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorName {
    Regression,
    Ipw,
    Aipw,
    Matching,
}

impl FromStr for EstimatorName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regression" | "reg" => Ok(EstimatorName::Regression),
            "ipw" => Ok(EstimatorName::Ipw),
            "aipw" => Ok(EstimatorName::Aipw),
            "matching" | "mat" => Ok(EstimatorName::Matching),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Parse a comma-separated estimator list; `all` selects every estimator.
pub fn parse_estimators(list: &str, matches: usize, on: MatchOn) -> Result<Vec<EstimatorKind>> {
    let names: Vec<EstimatorName> = if list.trim().eq_ignore_ascii_case("all") {
        vec![EstimatorName::Regression, EstimatorName::Ipw, EstimatorName::Aipw, EstimatorName::Matching]
    } else {
        list.split(',').map(str::parse).collect::<Result<_>>()?
    };
    if names.is_empty() {
        return Err(Error::Config("empty estimator list".into()));
    }
    if matches == 0 {
        return Err(Error::Config("matches must be positive".into()));
    }
    Ok(names
        .into_iter()
        .map(|n| match n {
            EstimatorName::Regression => EstimatorKind::Regression,
            EstimatorName::Ipw => EstimatorKind::Ipw,
            EstimatorName::Aipw => EstimatorKind::Aipw,
            EstimatorName::Matching => EstimatorKind::Matching { matches, on },
        })
        .collect())
}

/// Settings for `analyze` and `impute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub roles: ColumnRoles,
    pub mechanism: Mechanism,
    pub prior: Option<PriorSpec>,
    pub iterations: usize,
    pub burn_in: usize,
    pub selection: Selection,
    pub m: usize,
    pub b: usize,
    pub weights: WeightScheme,
    pub cond_draws: usize,
    pub level: f64,
    pub estimators: Vec<EstimatorName>,
    pub matches: usize,
    pub match_on: MatchVariable,
    pub seed: u64,
    /// SHA-256 of the source text.
    pub hash: String,
}

impl AnalysisConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        use sha2::{Digest, Sha256};
        let flat = FlatConfig::parse(text)?;
        if let Some(k) = flat.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        let required = |key: &str| {
            flat.get(key)
                .map(str::to_string)
                .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
        };
        let roles = ColumnRoles {
            treatment: required("data.treatment")?,
            outcome: required("data.outcome")?,
            confounders: flat.list("data.confounders").unwrap_or_default(),
            missing_token: flat.get("data.missing_token").unwrap_or("").to_string(),
        };
        roles.check()?;
        let p = roles.confounders.len();
        let mechanism = match flat.get("model.mechanism").unwrap_or("mar").to_ascii_lowercase().as_str() {
            "mar" => Mechanism::Mar,
            "mnar" => Mechanism::MnarOutcomeIndependent,
            other => return Err(Error::Config(format!("unknown mechanism '{other}'"))),
        };
        let prior_keys = flat.keys().any(|k| k.starts_with("prior."));
        let prior = if prior_keys {
            let mut prior = PriorSpec::new(p);
            if let Some(v) = flat.parsed("prior.coef_variance")? {
                prior.coef_variance = v;
            }
            if let Some(v) = flat.parsed("prior.precision_shape")? {
                prior.precision_shape = v;
            }
            if let Some(v) = flat.parsed("prior.precision_rate")? {
                prior.precision_rate = v;
            }
            if let Some(v) = flat.parsed("prior.mu_variance")? {
                prior.mu_variance = v;
            }
            if let Some(v) = flat.parsed::<f64>("prior.sigma_scale")? {
                prior.sigma_scale = DMatrix::identity(p, p) * v;
            }
            if let Some(v) = flat.parsed("prior.sigma_df")? {
                prior.sigma_df = v;
            }
            prior.check(p)?;
            Some(prior)
        } else {
            None
        };
        let defaults = GibbsConfig::default();
        let selection = match flat.get("gibbs.selection").unwrap_or("random").to_ascii_lowercase().as_str() {
            "random" => Selection::Random,
            "thinned" => Selection::Thinned,
            other => return Err(Error::Config(format!("unknown selection '{other}'"))),
        };
        let match_on = match flat.get("estimators.match_on").unwrap_or("auto").to_ascii_lowercase().as_str() {
            "auto" => MatchVariable::Auto,
            "covariates" | "x" => MatchVariable::Covariates,
            "propensity" | "ps" => MatchVariable::PropensityScore,
            other => return Err(Error::Config(format!("unknown match variable '{other}'"))),
        };
        let estimators = match flat.list("estimators.list") {
            Some(names) if names.len() == 1 && names[0].eq_ignore_ascii_case("all") => {
                parse_estimators("all", 1, MatchOn::Covariates)?.iter().map(name_of).collect()
            }
            Some(names) => names.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?,
            None => parse_estimators("all", 1, MatchOn::Covariates)?.iter().map(name_of).collect(),
        };
        let cfg = AnalysisConfig {
            roles,
            mechanism,
            prior,
            iterations: flat.parsed("gibbs.iterations")?.unwrap_or(defaults.iterations),
            burn_in: flat.parsed("gibbs.burn_in")?.unwrap_or(defaults.burn_in),
            selection,
            m: flat.parsed("mi.m")?.unwrap_or(defaults.m),
            b: flat.parsed("bootstrap.b")?.unwrap_or(1000),
            weights: flat.get("bootstrap.weights").unwrap_or("mammen").parse()?,
            cond_draws: flat.parsed("bootstrap.cond_draws")?.unwrap_or(200),
            level: flat.parsed("bootstrap.level")?.unwrap_or(0.95),
            estimators,
            matches: flat.parsed("estimators.matches")?.unwrap_or(1),
            match_on,
            seed: flat.parsed("run.seed")?.unwrap_or(0),
            hash: Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config("mi.m must be at least 2".into()));
        }
        if self.b < 2 {
            return Err(Error::Config("bootstrap.b must be at least 2".into()));
        }
        if self.cond_draws == 0 {
            return Err(Error::Config("bootstrap.cond_draws must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidLevel(self.level));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("empty estimator list".into()));
        }
        if self.matches == 0 {
            return Err(Error::Config("estimators.matches must be positive".into()));
        }
        self.gibbs().check()
    }

    pub fn gibbs(&self) -> GibbsConfig {
        GibbsConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            m: self.m,
            selection: self.selection,
            seed: self.seed,
        }
    }

    pub fn prior_for(&self, p: usize) -> PriorSpec {
        self.prior.clone().unwrap_or_else(|| PriorSpec::new(p))
    }

    /// Estimator kinds for data with `p` confounders.
    pub fn kinds(&self, p: usize) -> Vec<EstimatorKind> {
        let on = match self.match_on {
            MatchVariable::Auto if p > 3 => MatchOn::PropensityScore,
            MatchVariable::Auto | MatchVariable::Covariates => MatchOn::Covariates,
            MatchVariable::PropensityScore => MatchOn::PropensityScore,
        };
        self.estimators
            .iter()
            .map(|n| match n {
                EstimatorName::Regression => EstimatorKind::Regression,
                EstimatorName::Ipw => EstimatorKind::Ipw,
                EstimatorName::Aipw => EstimatorKind::Aipw,
                EstimatorName::Matching => EstimatorKind::Matching {
                    matches: self.matches,
                    on,
                },
            })
            .collect()
    }
}

fn name_of(k: &EstimatorKind) -> EstimatorName {
    match k {
        EstimatorKind::Regression => EstimatorName::Regression,
        EstimatorKind::Ipw => EstimatorName::Ipw,
        EstimatorKind::Aipw => EstimatorName::Aipw,
        EstimatorKind::Matching { .. } => EstimatorName::Matching,
    }
}
