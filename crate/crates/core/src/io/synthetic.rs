//! Synthetic survey-like data: a binary education indicator, a continuous
//! health score, five demographic confounders (categories already expanded
//! to dummies) and a poverty ratio with missing values. Nothing here is
//! real survey data.

use rand::Rng;

use crate::data::ObservedDataset;
use crate::io::table::ColumnRoles;
use crate::normal;
use crate::rng;

pub const SURVEY_N: usize = 4845;

pub const CONFOUNDERS: [&str; 6] = ["age", "male", "black", "hispanic", "married", "poverty_ratio"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurveyMissingness {
    /// About 10% of poverty ratios missing.
    Base,
    /// A second masking step on top of `Base`, about 35% missing in total.
    Amplified,
}

pub fn survey_roles() -> ColumnRoles {
    ColumnRoles::new("education", "health", &CONFOUNDERS)
}

/// `n` units with roughly 76% treated.
pub fn survey_like(n: usize, missingness: SurveyMissingness, seed: u64) -> ObservedDataset {
    let mut r = rng::stream(seed, &[]);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let age = (20.0 + 60.0 * r.random::<f64>()).round();
        let male = (r.random::<f64>() < 0.48) as u8 as f64;
        let u = r.random::<f64>();
        let (black, hispanic) = if u < 0.22 {
            (1.0, 0.0)
        } else if u < 0.47 {
            (0.0, 1.0)
        } else {
            (0.0, 0.0)
        };
        let married = (r.random::<f64>() < 0.5 + 0.004 * (age - 50.0)) as u8 as f64;
        let poverty = (2.4 - 0.5 * black - 0.6 * hispanic + 0.3 * married + 1.3 * normal::draw(&mut r)).clamp(0.0, 5.0);
        let eta = 0.82 - 0.012 * (age - 50.0) - 0.35 * hispanic + 0.1 * married + 0.25 * (poverty - 2.2);
        let treated = r.random::<f64>() < normal::cdf(eta);
        let at = treated as u8 as f64;
        let health = 3.4 - 0.3 * at + 0.006 * (age - 50.0) - 0.05 * male + 0.1 * black + 0.15 * hispanic
            - 0.08 * married
            - 0.15 * poverty
            + 0.85 * normal::draw(&mut r);
        let mut observed = r.random::<f64>() < normal::cdf(1.05 + 0.25 * at - 0.005 * (age - 50.0));
        if missingness == SurveyMissingness::Amplified {
            observed &= r.random::<f64>() < normal::cdf(0.3 - 0.04 * age + 2.0 * poverty - at);
        }
        a.push(treated as u8);
        y.push(Some(health));
        rows.push(vec![
            Some(age),
            Some(male),
            Some(black),
            Some(hispanic),
            Some(married),
            observed.then_some(poverty),
        ]);
    }
    ObservedDataset::new(a, y, rows).with_covariate_names(CONFOUNDERS.iter().map(|s| s.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate;

    #[test]
    fn marginals() {
        let base = survey_like(SURVEY_N, SurveyMissingness::Base, 1);
        assert!(validate(&base).is_ok());
        let n = base.n() as f64;
        let treated = base.treatments().iter().filter(|&&t| t == 1).count() as f64 / n;
        let missing = base.column_missing_count(5) as f64 / n;
        assert!((treated - 0.76).abs() < 0.03, "treated {treated}");
        assert!((missing - 0.10).abs() < 0.03, "missing {missing}");
        assert_eq!(base.missing_count(), base.column_missing_count(5));
        let amp = survey_like(SURVEY_N, SurveyMissingness::Amplified, 1);
        let missing = amp.column_missing_count(5) as f64 / n;
        assert!((missing - 0.35).abs() < 0.05, "amplified missing {missing}");
    }
}
